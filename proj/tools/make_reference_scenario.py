#!/usr/bin/env python3
"""Writes data/scenarios/reference.json (IEEE-39 bus grid + 40-node gas network)."""
import json
import math
import random
import sys

# IEEE-39 branches: from, to, r, x, total line charging (pu on 100 MVA)
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987), (1, 39, 0.0010, 0.0250, 0.7500),
    (2, 3, 0.0013, 0.0151, 0.2572), (2, 25, 0.0070, 0.0086, 0.1460),
    (2, 30, 0.0000, 0.0181, 0.0000), (3, 4, 0.0013, 0.0213, 0.2214),
    (3, 18, 0.0011, 0.0133, 0.2138), (4, 5, 0.0008, 0.0128, 0.1342),
    (4, 14, 0.0008, 0.0129, 0.1382), (5, 6, 0.0002, 0.0026, 0.0434),
    (5, 8, 0.0008, 0.0112, 0.1476), (6, 7, 0.0006, 0.0092, 0.1130),
    (6, 11, 0.0007, 0.0082, 0.1389), (6, 31, 0.0000, 0.0250, 0.0000),
    (7, 8, 0.0004, 0.0046, 0.0780), (8, 9, 0.0023, 0.0363, 0.3804),
    (9, 39, 0.0010, 0.0250, 1.2000), (10, 11, 0.0004, 0.0043, 0.0729),
    (10, 13, 0.0004, 0.0043, 0.0729), (10, 32, 0.0000, 0.0200, 0.0000),
    (12, 11, 0.0016, 0.0435, 0.0000), (12, 13, 0.0016, 0.0435, 0.0000),
    (13, 14, 0.0009, 0.0101, 0.1723), (14, 15, 0.0018, 0.0217, 0.3660),
    (15, 16, 0.0009, 0.0094, 0.1710), (16, 17, 0.0007, 0.0089, 0.1342),
    (16, 19, 0.0016, 0.0195, 0.3040), (16, 21, 0.0008, 0.0135, 0.2548),
    (16, 24, 0.0003, 0.0059, 0.0680), (17, 18, 0.0007, 0.0082, 0.1319),
    (17, 27, 0.0013, 0.0173, 0.3216), (19, 20, 0.0007, 0.0138, 0.0000),
    (19, 33, 0.0007, 0.0142, 0.0000), (20, 34, 0.0009, 0.0180, 0.0000),
    (21, 22, 0.0008, 0.0140, 0.2565), (22, 23, 0.0006, 0.0096, 0.1846),
    (22, 35, 0.0000, 0.0143, 0.0000), (23, 24, 0.0022, 0.0350, 0.3610),
    (23, 36, 0.0005, 0.0272, 0.0000), (25, 26, 0.0032, 0.0323, 0.5310),
    (25, 37, 0.0006, 0.0232, 0.0000), (26, 27, 0.0014, 0.0147, 0.2396),
    (26, 28, 0.0043, 0.0474, 0.7802), (26, 29, 0.0057, 0.0625, 1.0290),
    (28, 29, 0.0014, 0.0151, 0.2490), (29, 38, 0.0008, 0.0156, 0.0000),
]

# Solved operating point: |V| pu, angle deg
VOLTAGES = [
    (1.0394, -13.537), (1.0485, -9.785), (1.0307, -12.276), (1.0045, -12.627),
    (1.0060, -11.192), (1.0082, -10.408), (0.9984, -12.756), (0.9979, -13.336),
    (1.0383, -14.178), (1.0178, -8.171), (1.0134, -8.937), (1.0008, -8.999),
    (1.0149, -8.930), (1.0123, -10.715), (1.0162, -11.345), (1.0325, -10.033),
    (1.0342, -11.116), (1.0316, -11.986), (1.0501, -5.410), (0.9910, -6.821),
    (1.0323, -7.629), (1.0501, -3.183), (1.0451, -3.381), (1.0380, -9.914),
    (1.0577, -8.369), (1.0526, -9.439), (1.0383, -11.362), (1.0504, -5.928),
    (1.0501, -3.170), (1.0499, -7.370), (0.9820, 0.000), (0.9841, -0.188),
    (0.9972, -0.193), (1.0123, -1.631), (1.0494, 1.777), (1.0636, 4.468),
    (1.0275, -1.583), (1.0265, 3.893), (1.0300, -14.535),
]

# Gas pipelines: (node i, node j), length km, diameter m; cycle-closing pipes are dropped below
PIPES = [
    ((1, 6), 13.07, 1.0), ((14, 19), 76.89, 0.8), ((28, 16), 21.55, 1.0), ((16, 17), 6.99, 1.0),
    ((17, 13), 58.21, 0.8), ((28, 29), 86.69, 0.8), ((29, 12), 16.57, 0.6), ((12, 21), 10.02, 0.6),
    ((29, 7), 35.21, 0.6), ((7, 23), 20.32, 0.6), ((21, 9), 32.86, 0.8), ((28, 6), 47.48, 0.8),
    ((9, 10), 3.80, 0.6), ((9, 25), 39.03, 0.8), ((10, 27), 38.65, 0.4), ((25, 4), 18.01, 0.6),
    ((27, 24), 3.06, 0.6), ((24, 15), 12.01, 0.4), ((10, 8), 14.04, 0.4), ((8, 20), 20.63, 0.6),
    ((20, 7), 10.58, 0.6), ((20, 11), 10.45, 0.6), ((6, 26), 12.39, 0.8), ((11, 23), 19.30, 0.6),
    ((28, 23), 66.03, 0.6), ((28, 18), 18.96, 1.0), ((18, 32), 36.06, 0.8), ((32, 31), 22.22, 0.8),
    ((32, 5), 31.17, 0.8), ((5, 18), 12.76, 1.0), ((32, 2), 32.92, 0.8), ((3, 22), 49.86, 0.8),
    ((22, 33), 3.47, 0.8), ((3, 34), 3.41, 1.0), ((30, 22), 26.42, 0.8), ((13, 14), 18.13, 1.0),
    ((13, 22), 65.05, 0.8), ((13, 33), 65.53, 1.0), ((30, 34), 32.44, 1.0),
]

# Compressor stations become 10 km, 1 m pipelines with the ratio at the first node's end
COMPRESSORS = [((2, 40), 1.2), ((6, 38), 1.25), ((28, 39), 1.1),
               ((35, 3), 1.2), ((22, 36), 1.15), ((14, 37), 1.18)]

SOURCES = {1: 57.0, 2: 58.0, 35: 50.0}
JUNCTIONS = [3, 6, 9, 10, 13, 14, 22, 28]
# gas node -> (bus, MW)
GTUS = {36: (33, 200.0), 37: (34, 180.0), 38: (35, 220.0), 39: (36, 160.0), 40: (38, 240.0)}
GTU_EFFICIENCY = 2.0e7

# Buses without PMU, in removal order: 6 for the 33-PMU sets, 12 for medium, 15 for reduced
PMU_REMOVAL = [4, 8, 14, 17, 21, 24, 27, 12, 15, 9, 19, 23, 7, 3, 1]
# Gas nodes without meters, in removal order: 0 / 14 / 19 / 21
METER_REMOVAL = [3, 9, 13, 22, 10, 6, 28, 14, 36, 37, 38, 39, 40, 35, 11, 16, 27, 31, 5, 19, 24]


def tree_pipes():
    parent = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    kept = []
    for (i, j), length, d in PIPES:
        a, b = find(i), find(j)
        if a != b:
            parent[a] = b
            kept.append((i, j, length, d))
    return kept


def sensor_set(n_pmu_removed, n_meter_removed, branches):
    pmu = [b for b in range(1, 40) if b not in PMU_REMOVAL[:n_pmu_removed]]
    meters = [n for n in range(1, 41) if n not in METER_REMOVAL[:n_meter_removed]]
    current = [k + 1 for k, br in enumerate(branches) if br[0] in pmu]
    return {
        "pmu_buses": pmu,
        "branch_current_meters": current,
        "injection_current_buses": pmu,
        "pressure_nodes": meters,
        "flow_nodes": meters,
    }


def main(path):
    rng = random.Random(20240611)
    shunt_b = [0.0] * 40
    branches = []
    for f, t, r, x, bc in BRANCHES:
        shunt_b[f] += bc / 2
        shunt_b[t] += bc / 2
        branches.append((f, t, r, x))
    buses = []
    for k, (vm, va) in enumerate(VOLTAGES, start=1):
        buses.append({"id": k, "g0": 0.0, "b0": round(shunt_b[k], 6), "vm": vm, "va_deg": va})

    pipes = []
    for i, j, length, d in tree_pipes():
        pipes.append({"from": i, "to": j, "length_km": length, "diameter_m": d})
    for (i, j), ratio in COMPRESSORS:
        pipes.append({"from": i, "to": j, "length_km": 10.0, "diameter_m": 1.0, "ratio_from": ratio})

    nodes = []
    for n in range(1, 41):
        node = {"id": n}
        if n in SOURCES:
            node["source_density"] = SOURCES[n]
        nodes.append(node)

    loads = []
    for n in range(1, 41):
        if n in SOURCES or n in JUNCTIONS or n in GTUS:
            continue
        loads.append({
            "node": n,
            "mean": round(rng.uniform(4.0, 14.0), 3),
            "daily_amplitude": 0.15,
            "weekly_amplitude": 0.05,
            "daily_phase_rad": round(rng.uniform(-0.6, 0.6), 4),
            "weekly_phase_rad": round(rng.uniform(0.0, 2 * math.pi), 4),
        })

    doc = {
        "format": "iestrack-scenario",
        "version": 1,
        "name": "ieee39-gas40",
        "electric": {
            "buses": buses,
            "branches": [{"from": f, "to": t, "r": r, "x": x} for f, t, r, x in branches],
        },
        "gas": {
            "sound_speed": 350.0,
            "default_friction": 0.01,
            "nodes": nodes,
            "pipelines": pipes,
        },
        "gtu_links": [
            {"gas_node": m, "bus": bus, "efficiency": GTU_EFFICIENCY, "power_mw": mw}
            for m, (bus, mw) in sorted(GTUS.items())
        ],
        "sensor_sets": {
            "33pmu-40meters": sensor_set(6, 0, branches),
            "33pmu-26meters": sensor_set(6, 14, branches),
            "27pmu-21meters": sensor_set(12, 19, branches),
            "24pmu-19meters": sensor_set(15, 21, branches),
        },
        "default_sensor_set": "33pmu-40meters",
        "noise_levels": {
            "high": {"voltage": 9e-4, "current": 9e-4, "pressure_mpa2": 4e-4, "mass": 9e-4},
            "medium": {"voltage": 4e-4, "current": 4e-4, "pressure_mpa2": 1e-4, "mass": 4e-4},
            "low": {"voltage": 1e-4, "current": 1e-4, "pressure_mpa2": 0.64e-4, "mass": 1e-4},
        },
        "default_noise": "medium",
        "loads": {"days": 30, "noise_fraction": 0.02, "noise_correlation": 0.98, "nodes": loads},
        "electric_profile": {
            "magnitude_swing": 0.01,
            "angle_swing_rad": 0.05,
            "fluctuation_std": 1e-4,
            "fluctuation_corr": 0.98,
            "common_fraction": 0.8,
        },
        "run": {
            "dt_s": 300.0,
            "steps": 288,
            "theta": 1.0,
            "holt_alpha": 0.8,
            "holt_beta": 0.5,
        },
        "filter": {
            "process_sqrt": {"electric": 2e-3, "density": 1e-3, "flow": 1e-3, "load": 0.01, "load_common": 0.5, "electric_common": 0.99},
            "initial_sqrt": {"electric": 1e-3, "density": 1e-2, "flow": 0.1},
        },
        "lstm": {
            "layers": 3, "hidden": 80, "window": 5, "epochs": 40,
            "learning_rate": 1e-3, "batch": 32, "clip_norm": 5.0, "samples_per_epoch": 4096,
        },
    }
    with open(path, "w", encoding="utf-8") as out:
        json.dump(doc, out, indent=1)
        out.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/scenarios/reference.json")
