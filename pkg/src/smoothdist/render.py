"""Sphere tracing of the smooth distance isosurface, grid benchmark and beta ablation."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exact_dist import exact_min_distance
from .mesh import SimplexMesh, bounding_box, normalize_to_benchmark_frame
from .smooth import STACK_SIZE, DistanceField, SmoothParams, _parallel_ranges, collect, finish


@dataclass(frozen=True)
class RenderConfig:
    origin: tuple = (0.0, 0.0, 3.0)
    target: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = 40.0  # vertical, degrees
    width: int = 256
    height: int = 256
    threshold: float | None = None  # default 1e-3 * bbox diagonal
    max_steps: int = 256
    background: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if self.threshold is not None and not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not all(math.isfinite(x) for x in (*self.origin, *self.target, *self.up, self.fov)):
            raise ValueError("camera must be finite")
        if not 0 < self.fov < 180:
            raise ValueError("fov must lie in (0, 180) degrees")


def parse_camera(text):
    """'ox,oy,oz:tx,ty,tz' -> (origin, target)."""
    try:
        a, b = text.split(":")
        o = tuple(float(x) for x in a.split(","))
        t = tuple(float(x) for x in b.split(","))
    except ValueError as exc:
        raise ValueError(f"bad camera spec {text!r}, expected 'ox,oy,oz:tx,ty,tz'") from exc
    if len(o) != 3 or len(t) != 3:
        raise ValueError(f"bad camera spec {text!r}, expected 'ox,oy,oz:tx,ty,tz'")
    return o, t


def camera_rays(cfg: RenderConfig):
    o = np.asarray(cfg.origin, dtype=float)
    fwd = np.asarray(cfg.target, dtype=float) - o
    if np.linalg.norm(fwd) == 0:
        raise ValueError("camera origin and target coincide")
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(cfg.up, dtype=float))
    if np.linalg.norm(right) < 1e-12:
        right = np.cross(fwd, [1.0, 0.0, 0.0] if abs(fwd[0]) < 0.9 else [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    h = math.tan(math.radians(cfg.fov) / 2)
    aspect = cfg.width / cfg.height
    xs = ((np.arange(cfg.width) + 0.5) / cfg.width * 2 - 1) * h * aspect
    ys = (1 - (np.arange(cfg.height) + 0.5) / cfg.height * 2) * h
    X, Y = np.meshgrid(xs, ys)
    d = fwd + X[..., None] * right + Y[..., None] * up
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return o, d.reshape(-1, 3)


def clip_rays(o, dirs, lo, hi):
    """Slab test: (t_near, t_far) per ray, t_near > t_far for misses."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (lo - o) * inv
        t1 = (hi - o) * inv
    tmin = np.nan_to_num(np.minimum(t0, t1), nan=-np.inf)
    tmax = np.nan_to_num(np.maximum(t0, t1), nan=np.inf)
    tn = np.maximum(tmin.max(axis=1), 0.0)
    tf = tmax.min(axis=1)
    return tn, tf


def march_margin(field: DistanceField, params: SmoothParams, threshold):
    """Distance from the mesh bbox beyond which d_hat > threshold for every beta.

    Every term of the sum is at most far_w**S * exp(-alpha * dist(q, bbox)),
    so d_hat >= dist(q, bbox) - log(|F| far_w**S) / alpha.
    """
    return threshold + math.log(len(field.mesh) * field.max_weight(params)) / params.alpha


@njit(cache=True, nogil=True)
def march(geom, tree, o, dirs, tnear, tfar, alpha, S, beta, metric, eps, threshold, min_step, max_steps,
          out_t, out_n, out_leaves, out_steps):
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    fv = np.zeros((3, 3))
    gv = np.zeros((3, 3))
    gout = np.zeros((3, 3))
    for k in range(dirs.shape[0]):
        out_t[k] = np.inf
        out_n[k, :] = 0.0
        out_leaves[k] = 0
        out_steps[k] = 0
        t = tnear[k]
        if t > tfar[k]:
            continue
        for step in range(max_steps):
            for x in range(3):
                gv[0, x] = o[x] + t * dirs[k, x]
            c, lv, fr = collect(geom, tree, gv, 0, alpha, S, beta, metric, False, stack, fv, gout)
            out_leaves[k] += lv + fr
            out_steps[k] += 1
            d, inv = finish(c, alpha, eps)
            if d < threshold:
                out_t[k] = t
                for x in range(3):
                    out_n[k, x] = gout[0, x] * inv
                break
            t += max(d, min_step)
            if t > tfar[k]:
                break


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W) uint8
    depth: np.ndarray  # (H, W), inf for misses
    seconds: float
    leaves: np.ndarray  # per ray, leaf evaluations plus far-field expansions
    steps: np.ndarray

    @property
    def mean_leaves(self):
        return float(self.leaves.mean())


def shade(depth, normals, dirs, background=0):
    hit = np.isfinite(depth)
    n = normals / np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-300)
    lam = np.abs(np.sum(n * dirs, axis=1))
    img = np.full(len(depth), background, dtype=np.uint8)
    img[hit] = np.clip(np.round(40 + 215 * lam[hit]), 0, 255).astype(np.uint8)
    return img


def render(field: DistanceField, params: SmoothParams, cfg: RenderConfig, threads=1) -> RenderResult:
    diag = bounding_box(field.mesh).diagonal
    threshold = cfg.threshold if cfg.threshold is not None else 1e-3 * diag
    o, dirs = camera_rays(cfg)
    box = bounding_box(field.mesh)
    margin = march_margin(field, params, threshold)
    tn, tf = clip_rays(o, dirs, box.lo - margin, box.hi + margin)
    n = len(dirs)
    out_t = np.empty(n)
    out_n = np.empty((n, 3))
    out_l = np.empty(n, dtype=np.int64)
    out_s = np.empty(n, dtype=np.int64)
    args = (params.alpha, params.attenuation, params.beta, params.metric_scaling, params.epsilon,
            threshold, 0.1 * threshold, cfg.max_steps)

    def run(a, b):
        march(field._geom, field.tree, o, dirs[a:b], tn[a:b], tf[a:b], *args, out_t[a:b], out_n[a:b], out_l[a:b], out_s[a:b])

    start = time.perf_counter()
    _parallel_ranges(run, n, threads, chunk=cfg.width)
    seconds = time.perf_counter() - start
    img = shade(out_t, out_n, dirs, cfg.background)
    shape = (cfg.height, cfg.width)
    return RenderResult(img.reshape(shape), out_t.reshape(shape), seconds, out_l, out_s)


def write_ppm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h, mx = int(parts[1]), int(parts[2]), int(parts[3])
    if mx != 255:
        raise ValueError("only 8-bit PPM supported")
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def write_png(path, img):
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path)


def trace(mesh: SimplexMesh, params: SmoothParams, cfg: RenderConfig, out_path, threads=1, png_path=None):
    field = DistanceField.build(mesh)
    res = render(field, params, cfg, threads=threads)
    write_ppm(out_path, res.image)
    if png_path:
        write_png(png_path, res.image)
    return res


# ---------------------------------------------------------------------------
# grid benchmark


def grid_points(resolution):
    c = (np.arange(resolution) + 0.5) / resolution
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    return np.stack([X, Y, Z], axis=-1).reshape(-1, 3)


@dataclass
class BenchResult:
    d_hat: np.ndarray
    leaves: np.ndarray
    far: np.ndarray
    slab_seconds: np.ndarray  # one entry per x-slab
    resolution: int

    @property
    def seconds(self):
        return float(self.slab_seconds.sum())

    @property
    def total_leaves(self):
        return int(self.leaves.sum())

    @property
    def total_visited(self):
        return int(self.leaves.sum() + self.far.sum())


def grid_bench(mesh: SimplexMesh, params: SmoothParams, resolution=100, threads=1, field=None) -> BenchResult:
    """Evaluate d_hat at voxel centres of a resolution^3 grid on [0, 1]^3 (mesh in benchmark frame)."""
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if field is None:
        field = DistanceField.build(normalize_to_benchmark_frame(mesh))
    Q = grid_points(resolution)
    n = len(Q)
    d = np.empty(n)
    lv = np.empty(n, dtype=np.int64)
    fr = np.empty(n, dtype=np.int64)
    slab = resolution * resolution
    times = np.zeros(resolution)
    field.query_points(Q[:1], params)  # keep JIT compilation out of the slab timings

    def run(a, b):
        for s in range(a, b):
            t0 = time.perf_counter()
            sl = slice(s * slab, (s + 1) * slab)
            out = field.query_points(Q[sl], params)
            d[sl], lv[sl], fr[sl] = out[0], out[2], out[3]
            times[s] = time.perf_counter() - t0

    _parallel_ranges(run, resolution, threads, chunk=1)
    return BenchResult(d, lv, fr, times, resolution)


def write_bench_csv(path, res: BenchResult):
    R = res.resolution
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["voxel", "i", "j", "k", "d_hat", "leaves", "far_field", "slab_seconds"])
        for idx in range(len(res.d_hat)):
            i, rem = divmod(idx, R * R)
            j, k = divmod(rem, R)
            w.writerow([idx, i, j, k, repr(float(res.d_hat[idx])), int(res.leaves[idx]), int(res.far[idx]),
                        f"{res.slab_seconds[i]:.6f}"])


# ---------------------------------------------------------------------------
# beta ablation


@dataclass
class AblationRow:
    beta: float
    seconds: float
    mean_leaves: float
    mean_error: float  # |t_beta - t_0| / bbox diagonal over rays hitting in both
    max_error: float
    mismatched: int  # rays that hit in exactly one of the two renders


def ablate_beta(mesh: SimplexMesh, params: SmoothParams, betas, cfg: RenderConfig, threads=1, field=None):
    """Render at beta = 0 and at each beta, comparing hit depths ray by ray."""
    if field is None:
        field = DistanceField.build(mesh)
    diag = bounding_box(field.mesh).diagonal
    ref_params = SmoothParams(params.alpha, params.alpha_u, 0.0, params.alpha_q, params.epsilon, params.metric_scaling)
    ref = render(field, ref_params, cfg, threads)
    rows = []
    for beta in betas:
        if beta == 0.0:
            cur = ref
        else:
            p = SmoothParams(params.alpha, params.alpha_u, beta, params.alpha_q, params.epsilon, params.metric_scaling)
            cur = render(field, p, cfg, threads)
        a, b = ref.depth.ravel(), cur.depth.ravel()
        both = np.isfinite(a) & np.isfinite(b)
        err = np.abs(a[both] - b[both]) / diag
        rows.append(AblationRow(
            float(beta), cur.seconds, cur.mean_leaves,
            float(err.mean()) if err.size else 0.0, float(err.max()) if err.size else 0.0,
            int(np.sum(np.isfinite(a) != np.isfinite(b))),
        ))
    return rows, ref


def write_ablation_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "seconds", "mean_leaves", "mean_error", "max_error", "mismatched_rays"])
        for r in rows:
            w.writerow([r.beta, f"{r.seconds:.6f}", f"{r.mean_leaves:.3f}", repr(r.mean_error), repr(r.max_error), r.mismatched])


# ---------------------------------------------------------------------------
# single query


def query_report(field: DistanceField, g, params: SmoothParams, exact=False) -> dict:
    res = field.query(g, params)
    out = {"d_hat": res.d_hat, "grad": res.grad, "leaves": res.leaves, "far_field": res.far_field}
    d_min, idx = exact_min_distance(field.mesh, g)
    out["d_min"] = d_min
    out["closest"] = idx
    out["gap"] = d_min - res.d_hat
    if exact:
        p0 = SmoothParams(params.alpha, params.alpha_u, 0.0, params.alpha_q, params.epsilon, params.metric_scaling)
        out["d_hat_exact"] = field.query(g, p0).d_hat
    return out
