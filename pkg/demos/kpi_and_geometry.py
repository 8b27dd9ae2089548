"""Walk through one KPI label and the neighborhood of a single cell.

Run: python demos/kpi_and_geometry.py
"""

import numpy as np

from cellqos.kpi import DEFAULT_BIN_EDGES, ThroughputDistribution, TimeSlotSeries, tmler_x, tmler_x_curve
from cellqos.spatial import RULE_TAGS, CellLayout, PlanarPoint, build_index, cell_context, neighbor_box


def kpi_demo():
    # half the traffic is served below 5 Mbps, half at 100-200 Mbps
    volumes = np.zeros(len(DEFAULT_BIN_EDGES) - 1)
    volumes[0] = 50.0
    volumes[DEFAULT_BIN_EDGES.index(100.0)] = 50.0
    dist = ThroughputDistribution(volumes)
    slots = TimeSlotSeries([90.0, 10.0])
    print("KPI at x=100:", tmler_x(dist, slots, 100.0).y)
    for edge, y in zip(DEFAULT_BIN_EDGES, tmler_x_curve(dist, slots)):
        print(f"  x={edge:>6g}  y={y:.3f}")


def geometry_demo():
    box = neighbor_box(PlanarPoint(0.0, 0.0), 120.0)
    print("box center for azimuth 120:", round(box.center.x, 3), round(box.center.y, 3))
    # cell 0 faces east-south-east; the others sit around it
    names = ["own", "cosite", "close", "facing", "sideways", "other_op"]
    xs = [0.0, 2.0, 80.0, 500.0, 400.0, 300.0]
    ys = [0.0, 1.0, -60.0, -290.0, -100.0, -150.0]
    az = [120.0, 200.0, 10.0, 300.0, 30.0, 300.0]
    ops = ["A", "A", "A", "A", "A", "B"]
    sites = ["s0", "s0", "s1", "s2", "s3", "s4"]
    lay = CellLayout.from_arrays(names, xs, ys, az, ops, sites)
    ctx = cell_context(0, lay, build_index(lay))
    for j, d, rule in zip(ctx.neighbors, ctx.distances, ctx.rules):
        tag = RULE_TAGS.get(int(rule), "-")
        print(f"  neighbor {names[j]:<8} {d:7.1f} m  interferer rule: {tag}")


if __name__ == "__main__":
    kpi_demo()
    geometry_demo()
