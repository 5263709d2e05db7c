#!/usr/bin/env python3
"""Generate reference per-electrode axon map kernels with pulse2percept.

The output files are consumed by the C++ acceptance suite. Electrode layout
and render window are rebuilt here from first principles (numpy only) so the
reference does not depend on the C++ implant or grid code.

Output format (little-endian), one file per (rho, lambda):
  magic 'P2PR', u32 version=1, u32 n_electrodes, u32 width, u32 height,
  f64 az_min, az_max, el_min, el_max, f64 rho, f64 lambda,
  n_electrodes x (f64 x_um, f64 y_um),
  per electrode: u32 n_entries, n_entries x (u32 pixel, f32 value)
Entries below STORE_THRESHOLD are omitted.
"""
import argparse
import os
import struct
import tempfile

import numpy as np

import pulse2percept as p2p
from pulse2percept.implants import ElectrodeArray, PointSource, ProsthesisSystem
from pulse2percept.models import AxonMapModel
from pulse2percept.topography import Curcio1990Map

UM_PER_DEG = 280.0
STORE_THRESHOLD = 1e-4
CONDITIONS = [(300, 1000), (100, 50), (100, 5000), (500, 50), (500, 5000)]


def argus2_electrodes():
    rows, cols, pitch, rot_deg = 6, 10, 575.0, -45.0
    pts = []
    for r in range(rows):
        for c in range(cols):
            x = (c - (cols - 1) / 2.0) * pitch
            y = ((rows - 1) / 2.0 - r) * pitch
            pts.append((x, y))
    pts = np.array(pts)
    t = np.deg2rad(rot_deg)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return pts @ rot.T


def window_for(electrodes_um, margin=0.2):
    az = electrodes_um[:, 0] / UM_PER_DEG
    el = -electrodes_um[:, 1] / UM_PER_DEG
    caz = 0.5 * (az.min() + az.max())
    cel = 0.5 * (el.min() + el.max())
    half = 0.5 * max(az.max() - az.min(), el.max() - el.min())
    half *= 1.0 + 2.0 * margin
    return caz - half, caz + half, cel - half, cel + half


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--size", type=int, default=101)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    el_um = argus2_electrodes()
    az0, az1, el0, el1 = window_for(el_um)
    step = (az1 - az0) / (args.size - 1)
    implant = ProsthesisSystem(ElectrodeArray(
        [PointSource(x, y, 0) for x, y in el_um]))

    for rho, lam in CONDITIONS:
        with tempfile.TemporaryDirectory() as tmp:
            model = AxonMapModel(rho=rho, axlambda=lam,
                                 xrange=(az0, az1), yrange=(el0, el1),
                                 xystep=step, vfmap=Curcio1990Map(),
                                 n_axons=500, n_ax_segments=500,
                                 axon_pickle=os.path.join(tmp, "ax.pickle"),
                                 ignore_pickle=True)
            model.build()
        assert model.grid.shape == (args.size, args.size), model.grid.shape
        path = os.path.join(args.out, f"p2p_argus2_rho{rho}_lam{lam}.bin")
        with open(path, "wb") as f:
            f.write(b"P2PR")
            f.write(struct.pack("<IIII", 1, len(el_um), args.size, args.size))
            f.write(struct.pack("<6d", az0, az1, el0, el1, rho, lam))
            for x, y in el_um:
                f.write(struct.pack("<2d", x, y))
            for i, name in enumerate(implant.electrode_names):
                implant.stim = {name: 1.0}
                data = model.predict_percept(implant).data[:, :, 0].ravel()
                idx = np.nonzero(data >= STORE_THRESHOLD)[0]
                f.write(struct.pack("<I", len(idx)))
                rec = np.zeros(len(idx), dtype=[("p", "<u4"), ("v", "<f4")])
                rec["p"] = idx
                rec["v"] = data[idx]
                f.write(rec.tobytes())
        print(path, os.path.getsize(path))
    print("pulse2percept", p2p.__version__)


if __name__ == "__main__":
    main()
