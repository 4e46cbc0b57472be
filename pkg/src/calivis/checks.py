"""Acceptance checks, each pairing an implementation path with an independent oracle.

Every ``check_*`` function returns a :class:`CheckResult`; ``run_all`` runs
them in order. The oracles here are deliberately naive (Python loops, corner
arithmetic written out) and share no code with the paths they check beyond
the public function being exercised.
"""
from __future__ import annotations

import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import tensorio
from .calibration import KernelGrid, aligned_offsets, deformable_conv, roialign_center_oracle
from .config import PipelineConfig
from .geometry import Box, BoxDelta, decode_box, encode_box, nms_arrays
from .maskgen import assemble_mask
from .numerics import ConvKernel, conv2d
from .pipeline import run_video
from .results import rle_decode, rle_encode
from .synth import synth_scene
from .temporal import correlate

KERNEL_SHAPES = ((3, 3), (3, 5), (5, 3))  # (k_h, k_w)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d}. {self.name}: {self.detail}"


def check_aligned_offsets(n_pairs=1000, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(n_pairs):
        k_h, k_w = KERNEL_SHAPES[n % len(KERNEL_SHAPES)]
        grid = KernelGrid(k_h, k_w)
        p0y, p0x = rng.uniform(0, 64, size=2)
        anchor = Box(p0x, p0y, float(k_w), float(k_h))
        d = BoxDelta(*rng.uniform(-0.5, 0.5, size=2), *rng.uniform(-1.0, 1.0, size=2))
        pts = np.array(grid.points, np.float64)
        derived = np.array([p0y, p0x]) + pts + aligned_offsets(d, grid)
        oracle = roialign_center_oracle(decode_box(anchor, d), grid)
        worst = max(worst, float(np.max(np.abs(derived - oracle))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    return CheckResult(1, "aligned offsets == RoIAlign bin centres", ok, f"max err {worst:.2e}, {elapsed:.2f}s")


def check_deformable_identity(n_cases=100, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        h, w = rng.integers(3, 12, size=2)
        c_in, c_out = rng.integers(1, 6, size=2)
        k_h, k_w = rng.choice([1, 3, 5], size=2)
        t = rng.normal(size=(h, w, c_in)).astype(np.float32)
        k = ConvKernel.random(int(k_h), int(k_w), int(c_in), int(c_out), rng)
        zero = np.zeros((h, w, 2 * k_h * k_w), np.float32)
        worst = max(worst, float(np.max(np.abs(deformable_conv(t, k, zero) - conv2d(t, k)))))
    return CheckResult(2, "deformable conv with zero offsets == conv2d", worst <= 1e-6, f"max abs err {worst:.2e}")


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def check_box_round_trip(n_pairs=10000, seed=2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        p = Box(*rng.uniform(0, 500, size=2), *rng.uniform(1, 200, size=2))
        g = Box(*rng.uniform(0, 500, size=2), *rng.uniform(1, 200, size=2))
        g2 = decode_box(p, encode_box(p, g))
        d = BoxDelta(*rng.uniform(-2, 2, size=4))
        d2 = encode_box(p, decode_box(p, d))
        for x, y in zip((g2.cx, g2.cy, g2.w, g2.h), (g.cx, g.cy, g.w, g.h)):
            worst = max(worst, _rel(x, y))
        for x, y in zip((d2.dx, d2.dy, d2.dw, d2.dh), (d.dx, d.dy, d.dw, d.dh)):
            worst = max(worst, _rel(x, y))
    return CheckResult(3, "decode/encode round trips", worst <= 1e-5, f"max rel err {worst:.2e}")


def loop_mask_oracle(protos, coeffs, box: Box):
    h, w, k = protos.shape
    x1, x2 = box.cx - box.w / 2, box.cx + box.w / 2
    y1, y2 = box.cy - box.h / 2, box.cy + box.h / 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if not (y1 <= y + 0.5 < y2 and x1 <= x + 0.5 < x2):
                continue
            s = 0.0
            for c in range(k):
                s += float(protos[y, x, c]) * float(coeffs[c])
            out[y, x] = 1.0 / (1.0 + math.exp(-s))
    return out


def check_mask_assembly(n_cases=20, seed=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        h, w = rng.integers(4, 24, size=2)
        k = int(rng.integers(1, 10))
        protos = rng.normal(size=(h, w, k)).astype(np.float32)
        coeffs = rng.normal(size=k).astype(np.float32)
        box = Box(rng.uniform(0, w), rng.uniform(0, h), rng.uniform(1, w), rng.uniform(1, h))
        got = assemble_mask(protos, coeffs, box).values
        worst = max(worst, float(np.max(np.abs(got - loop_mask_oracle(protos, coeffs, box)))))
    return CheckResult(4, "matrix-multiply mask == per-pixel loop", worst <= 1e-6, f"max abs err {worst:.2e}")


def brute_force_nms(boxes, scores, thr, top_k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    corners = [(b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2) for b in boxes]
    keep = []
    for i in order:
        if len(keep) >= top_k:
            break
        ok = True
        for j in keep:
            a, b = corners[i], corners[j]
            iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
            ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
            inter = iw * ih
            union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
            if inter / union > thr:
                ok = False
                break
        if ok:
            keep.append(i)
    return keep


def check_nms(n_cases=200, max_boxes=300, seed=4) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_cases):
        n = int(rng.integers(0, max_boxes + 1))
        boxes = np.column_stack([rng.uniform(0, 100, size=(n, 2)), rng.uniform(2, 40, size=(n, 2))])
        # coarse scores so ties actually occur
        scores = np.round(rng.uniform(0, 1, size=n), 2)
        thr = float(rng.choice([0.3, 0.5, 0.7]))
        top_k = int(rng.choice([10, 100, 1000]))
        if nms_arrays(boxes, scores, thr, top_k) != brute_force_nms(boxes.tolist(), scores.tolist(), thr, top_k):
            mismatches += 1
    return CheckResult(5, "NMS == brute-force greedy", mismatches == 0, f"{mismatches}/{n_cases} mismatches")


def _shift(x, sy, sx):
    out = np.zeros_like(x)
    h, w, _ = x.shape
    out[max(sy, 0):h + min(sy, 0), max(sx, 0):w + min(sx, 0)] = x[max(-sy, 0):h + min(-sy, 0), max(-sx, 0):w + min(-sx, 0)]
    return out


def check_correlation(d_side=11, seed=5) -> CheckResult:
    rng = np.random.default_rng(seed)
    r = (d_side - 1) // 2
    h, w, c = 16, 18, 6
    prev = rng.normal(size=(h, w, c)).astype(np.float32)
    self_corr = correlate(prev, prev, d_side)
    centre = r * d_side + r
    failures = 0
    for sy in range(-r, r + 1):
        for sx in range(-r, r + 1):
            curr = _shift(prev, sy, sx)  # curr[y, x] = prev[y - sy, x - sx]
            vol = correlate(prev, curr, d_side)
            ch = (sy + r) * d_side + (sx + r)
            ys = slice(max(0, -sy), h - max(0, sy))
            xs = slice(max(0, -sx), w - max(0, sx))
            if not np.array_equal(vol[ys, xs, ch], self_corr[ys, xs, centre]):
                failures += 1
    unit = rng.normal(size=(h, w, c))
    unit = (unit / np.linalg.norm(unit, axis=2, keepdims=True)).astype(np.float32)
    argmax_ok = bool(np.all(np.argmax(correlate(unit, unit, d_side), axis=2) == centre))
    ok = failures == 0 and argmax_ok
    return CheckResult(
        6, "correlation translation equivariance + self-match argmax", ok,
        f"{failures} shift failures, argmax {'ok' if argmax_ok else 'wrong'}",
    )


def _track_ids(result, frames):
    return [sorted(result.frames[t]) for t in frames]


def check_tracking(cfg: PipelineConfig | None = None) -> CheckResult:
    cfg = cfg or PipelineConfig()
    notes = []
    base = {"grid": [8, 8], "proto_size": [32, 32], "num_classes": 3, "feat_channels": 8}

    static = {**base, "num_frames": 10, "objects": [{"category": 1, "box": [16.0, 16.0, 8.0, 8.0]}]}
    res = run_video(synth_scene(cfg, static)[0], None, cfg)
    a = all(sorted(f) == [1] for f in res.frames)
    notes.append(f"static {'ok' if a else 'FAIL'}")

    gap = {**base, "num_frames": 6,
           "objects": [{"category": 1, "box": [10.0, 16.0, 8.0, 8.0], "velocity": [1.0, 0.0], "hidden": [3]}]}
    res = run_video(synth_scene(cfg, gap)[0], None, cfg)
    b = all(sorted(f) == [1] for f in res.frames) and res.frames[3][1].source == "cross"
    notes.append(f"suppressed {'ok' if b else 'FAIL'}")

    crossing = {**base, "num_frames": 10, "objects": [
        {"category": 1, "box": [6.0, 12.0, 8.0, 8.0], "velocity": [2.0, 0.0]},
        {"category": 2, "box": [26.0, 17.0, 8.0, 8.0], "velocity": [-2.0, 0.0]},
    ]}
    frames, gt = synth_scene(cfg, crossing)
    res = run_video(frames, None, cfg)
    # map ground-truth objects to track ids on the first frame, then require it to hold
    first = res.frames[0]
    id_of = {
        g.id: min(first, key=lambda tid: np.abs(first[tid].box.as_array() - g.boxes[0].as_array()).max())
        for g in gt
    }
    c = len(set(id_of.values())) == len(gt)
    for t, fr in enumerate(res.frames):
        if not c or sorted(fr) != sorted(id_of.values()):
            c = False
            break
        for g in gt:
            e = fr[id_of[g.id]]
            if max(abs(x - y) for x, y in zip(e.box.as_array(), g.boxes[t].as_array())) > 1e-3:
                c = False
    notes.append(f"crossing {'ok' if c else 'FAIL'}")
    return CheckResult(7, "tracking scenarios (static / suppressed / crossing)", a and b and c, ", ".join(notes))


def check_cli_determinism(seed=0) -> CheckResult:
    env = dict(os.environ)
    src = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    with tempfile.TemporaryDirectory() as tmp:
        scene_dir = os.path.join(tmp, "scene")
        cmd = [sys.executable, "-m", "calivis"]
        subprocess.run(cmd + ["synth", "--out", scene_dir, "--seed", str(seed)], check=True, env=env,
                       capture_output=True)
        outs, times = [], []
        for n in range(2):
            out = os.path.join(tmp, f"results{n}.json")
            t0 = time.perf_counter()
            subprocess.run(cmd + ["run", scene_dir, "--seed", str(seed), "--out", out], check=True, env=env,
                           capture_output=True)
            times.append(time.perf_counter() - t0)
            with open(out, "rb") as f:
                outs.append(f.read())
    same = outs[0] == outs[1]
    ok = same and max(times) < 10.0
    return CheckResult(8, "`run` byte-identical across runs", ok,
                       f"identical={same}, slowest run {max(times):.2f}s")


def check_serialization(n_cases=100, seed=6) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        tensors = {}
        for e in range(int(rng.integers(1, 5))):
            shape = tuple(int(s) for s in rng.integers(1, 6, size=int(rng.integers(1, 5))))
            tensors[f"t{e}"] = rng.normal(size=shape).astype(np.float32)
        back = tensorio.loads(tensorio.dumps(tensors))
        if list(back) != list(tensors) or any(
            back[k].shape != v.shape or back[k].tobytes() != v.tobytes() for k, v in tensors.items()
        ):
            bad += 1
        m = rng.random(size=tuple(int(s) for s in rng.integers(1, 20, size=2))) < rng.random()
        if not np.array_equal(rle_decode(rle_encode(m)), m.astype(np.uint8)):
            bad += 1
    return CheckResult(9, "tensor container + run-length round trips", bad == 0, f"{bad} failures")


def check_correlation_speed(seed=7, budget=0.5, repeats=3) -> CheckResult:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(64, 64, 64)).astype(np.float32)
    b = rng.normal(size=(64, 64, 64)).astype(np.float32)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        correlate(a, b, 11)
        best = min(best, time.perf_counter() - t0)
    return CheckResult(10, "correlate 64x64x64, side 11", best <= budget, f"{best * 1000:.0f} ms (budget {budget * 1000:.0f})")


ALL_CHECKS = (
    check_aligned_offsets,
    check_deformable_identity,
    check_box_round_trip,
    check_mask_assembly,
    check_nms,
    check_correlation,
    check_tracking,
    check_cli_determinism,
    check_serialization,
    check_correlation_speed,
)


def run_all(out=print) -> bool:
    ok = True
    for fn in ALL_CHECKS:
        res = fn()
        out(res.line())
        ok &= res.passed
    return ok
