"""Image corruption benchmark: 16 corruption kinds in 4 families.

Each kind maps (image, severity, seed) to a corrupted image. Severity 0 is the
bit-exact identity for every kind; severities 1..5 look up a frozen parameter
table shipped as ``severity_params.json`` so that corrupted datasets stay
reproducible across releases. Deterministic kinds ignore the seed; stochastic
kinds (all noise kinds, frosted glass, snow, spatter, frost) consume it through
a dedicated RNG stream.

Pixels flow through the kernels in float64 on a [0, 1] scale and are rounded
half away from zero back to uint8 at the end.
"""

from __future__ import annotations

import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image as PILImage

from . import kernels
from .errors import SeverityOutOfRangeError
from .imagecore import DatasetIndex, Image, load_image, save_image
from .seeding import derive_seed, make_rng

PARAMS_SCHEMA_VERSION = 1
SEVERITIES = (0, 1, 2, 3, 4, 5)

CORRUPTION_FAMILIES = {
    "blur": ("motion_blur", "defocus_blur", "frosted_glass", "gaussian_blur"),
    "noise": ("gaussian_noise", "impulse_noise", "shot_noise", "speckle_noise"),
    "digital": ("brightness", "contrast", "saturate", "jpeg"),
    "weather": ("snow", "spatter", "fog", "frost"),
}
CORRUPTION_KINDS = tuple(k for kinds in CORRUPTION_FAMILIES.values() for k in kinds)

# internal seed for the fog haze field, which is shared by all images of a
# given size so the haze acts like a fixed overlay rather than per-image noise
_FOG_FIELD_SEED = 0x0F06


@lru_cache(maxsize=1)
def load_severity_params() -> dict:
    """Parsed frozen severity table; validates the schema version."""
    raw = resources.files(__package__).joinpath("severity_params.json").read_text()
    table = json.loads(raw)
    if table.get("schema_version") != PARAMS_SCHEMA_VERSION:
        raise ValueError(
            f"severity table schema {table.get('schema_version')} != {PARAMS_SCHEMA_VERSION}"
        )
    missing = set(CORRUPTION_KINDS) - set(table["kinds"])
    if missing:
        raise ValueError(f"severity table missing kinds: {sorted(missing)}")
    return table


def kind_family(kind: str) -> str:
    for family, kinds in CORRUPTION_FAMILIES.items():
        if kind in kinds:
            return family
    raise ValueError(f"unknown corruption kind {kind!r}")


def is_stochastic(kind: str) -> bool:
    return bool(load_severity_params()["kinds"][kind]["stochastic"])


STOCHASTIC_KINDS = frozenset(
    ("gaussian_noise", "impulse_noise", "shot_noise", "speckle_noise",
     "frosted_glass", "snow", "spatter", "frost")
)


def severity_level(kind: str, severity: int) -> dict:
    """Parameter dict for one kind at severities 1..5."""
    return load_severity_params()["kinds"][kind]["levels"][severity - 1]


# ---------------------------------------------------------------------------
# small helpers shared by several kinds


def _gaussian_weights(sigma: float, radius: Optional[int] = None) -> np.ndarray:
    if radius is None:
        radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


def _disk_kernel(radius: int, alias_sigma: float) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    disk = ((yy * yy + xx * xx) <= r * r).astype(np.float64)
    if alias_sigma > 0:
        w = _gaussian_weights(alias_sigma, radius=1)
        disk = np.apply_along_axis(lambda m: np.convolve(m, w, mode="same"), 0, disk)
        disk = np.apply_along_axis(lambda m: np.convolve(m, w, mode="same"), 1, disk)
    return disk / disk.sum()


def _line_kernel(radius: int, sigma: float, angle_deg: float) -> np.ndarray:
    """One-sided motion trail: taps along a ray from the center."""
    r = int(radius)
    kern = np.zeros((2 * r + 1, 2 * r + 1), dtype=np.float64)
    theta = math.radians(angle_deg)
    for t in range(r + 1):
        w = math.exp(-(t * t) / (2.0 * sigma * sigma))
        dy = int(round(-t * math.sin(theta)))
        dx = int(round(t * math.cos(theta)))
        kern[r + dy, r + dx] += w
    return kern / kern.sum()


def _blur_mono(field: np.ndarray, kern: np.ndarray) -> np.ndarray:
    return kernels.correlate2d(field[:, :, None], kern)[:, :, 0]


def _rgb_to_hsv(x: np.ndarray) -> np.ndarray:
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    maxc = x.max(axis=-1)
    minc = x.min(axis=-1)
    spread = maxc - minc
    v = maxc
    s = np.where(maxc > 0, spread / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(spread > 0, spread, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(spread > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    k = h * 6.0
    i = np.floor(k)
    f = k - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


@lru_cache(maxsize=8)
def _plasma_field(mapsize: int, decay: float, seed: int) -> np.ndarray:
    """Diamond-square haze field on a torus, normalized to [0, 1]."""
    assert mapsize & (mapsize - 1) == 0, "mapsize must be a power of two"
    rng = make_rng(seed, mapsize)
    arr = np.zeros((mapsize, mapsize), dtype=np.float64)
    step = mapsize
    wibble = 100.0

    def wibbled(total, count):
        return total / count + wibble * rng.uniform(-1.0, 1.0, total.shape)

    while step >= 2:
        half = step // 2
        corners = arr[0:mapsize:step, 0:mapsize:step]
        sq = corners + np.roll(corners, -1, axis=0)
        sq = sq + np.roll(sq, -1, axis=1)
        arr[half:mapsize:step, half:mapsize:step] = wibbled(sq, 4)
        centers = arr[half:mapsize:step, half:mapsize:step]
        up = centers + np.roll(centers, 1, axis=0)
        left = corners + np.roll(corners, -1, axis=1)
        arr[0:mapsize:step, half:mapsize:step] = wibbled(up + left, 4)
        side = centers + np.roll(centers, 1, axis=1)
        top = corners + np.roll(corners, -1, axis=0)
        arr[half:mapsize:step, 0:mapsize:step] = wibbled(side + top, 4)
        step = half
        wibble /= decay

    arr -= arr.min()
    peak = arr.max()
    if peak > 0:
        arr /= peak
    arr.flags.writeable = False
    return arr


def _whitened(x: np.ndarray) -> np.ndarray:
    gray = x.mean(axis=-1, keepdims=True)
    return np.maximum(x, np.clip(gray * 1.5 + 0.12, 0.0, 1.0))


# ---------------------------------------------------------------------------
# one function per corruption kind; x is float64 (H, W, 3) in [0, 1]


def _gaussian_noise(x, params, rng):
    return np.clip(x + rng.normal(0.0, params["sigma"], x.shape), 0.0, 1.0)


def _shot_noise(x, params, rng):
    lam = params["lam"]
    return np.clip(rng.poisson(x * lam) / float(lam), 0.0, 1.0)


def _impulse_noise(x, params, rng):
    # whole pixels turn white or black, so the changed fraction tracks `fraction`
    h, w = x.shape[:2]
    hit = rng.random((h, w)) < params["fraction"]
    salt = rng.random((h, w)) < 0.5
    out = x.copy()
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _speckle_noise(x, params, rng):
    return np.clip(x + x * rng.normal(0.0, params["sigma"], x.shape), 0.0, 1.0)


def _gaussian_blur(x, params, rng):
    return kernels.correlate_sep(x, _gaussian_weights(params["sigma"]))


def _defocus_blur(x, params, rng):
    return kernels.correlate2d(x, _disk_kernel(params["radius"], params["alias_sigma"]))


def _motion_blur(x, params, rng):
    kern = _line_kernel(params["radius"], params["sigma"], params["angle_deg"])
    return kernels.correlate2d(x, kern)


def _frosted_glass(x, params, rng):
    w = _gaussian_weights(params["sigma"])
    delta = int(params["max_delta"])
    iters = int(params["iterations"])
    h, wid = x.shape[:2]
    dy = rng.integers(-delta, delta + 1, size=(iters, h, wid), dtype=np.int64)
    dx = rng.integers(-delta, delta + 1, size=(iters, h, wid), dtype=np.int64)
    out = kernels.glass_shuffle(kernels.correlate_sep(x, w), dy, dx)
    return np.clip(kernels.correlate_sep(out, w), 0.0, 1.0)


def _brightness(x, params, rng):
    hsv = _rgb_to_hsv(np.clip(x, 0.0, 1.0))
    hsv[..., 2] = np.clip(hsv[..., 2] + params["offset"], 0.0, 1.0)
    return np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)


def _contrast(x, params, rng):
    means = x.mean(axis=(0, 1), keepdims=True)
    return np.clip((x - means) * params["scale"] + means, 0.0, 1.0)


def _saturate(x, params, rng):
    hsv = _rgb_to_hsv(np.clip(x, 0.0, 1.0))
    hsv[..., 1] = np.clip(hsv[..., 1] * params["scale"] + params["offset"], 0.0, 1.0)
    return np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)


def _jpeg(x, params, rng):
    u8 = kernels.round_to_u8(x * 255.0)
    buf = io.BytesIO()
    PILImage.fromarray(u8).save(
        buf, format="JPEG", quality=int(params["quality"]), subsampling=2
    )
    buf.seek(0)
    with PILImage.open(buf) as decoded:
        out = np.asarray(decoded.convert("RGB"), dtype=np.float64)
    return out / 255.0


def _snow(x, params, rng):
    h, w = x.shape[:2]
    flakes = (rng.random((h, w)) < params["flake_fraction"]).astype(np.float64)
    kern = _line_kernel(params["streak_length"], params["streak_sigma"], -60.0)
    streaks = np.clip(_blur_mono(flakes, kern) * params["flake_gain"], 0.0, 1.0)
    keep = params["keep"]
    out = keep * x + (1.0 - keep) * _whitened(x)
    return np.clip(np.maximum(out, streaks[:, :, None]), 0.0, 1.0)


def _spatter(x, params, rng):
    h, w = x.shape[:2]
    field = rng.standard_normal((h, w))
    gw = _gaussian_weights(params["blob_sigma"])
    smooth = kernels.correlate_sep(field[:, :, None], gw)[:, :, 0]
    mask = smooth > np.quantile(smooth, 1.0 - params["coverage"])
    mud = np.array([0.42, 0.30, 0.16])
    out = x.copy()
    o = params["opacity"]
    out[mask] = (1.0 - o) * out[mask] + o * mud
    return np.clip(out, 0.0, 1.0)


def _fog(x, params, rng):
    h, w = x.shape[:2]
    mapsize = 1
    while mapsize < max(h, w):
        mapsize *= 2
    haze = _plasma_field(mapsize, float(params["roughness_decay"]), _FOG_FIELD_SEED)
    c = params["intensity"]
    peak = x.max()
    out = x + c * haze[:h, :w, None]
    return np.clip(out * peak / (peak + c), 0.0, 1.0)


def _frost(x, params, rng):
    h, w = x.shape[:2]
    field = rng.standard_normal((h, w))
    veins = np.abs(_blur_mono(field, _line_kernel(9, 4.0, 45.0)))
    veins += np.abs(_blur_mono(field, _line_kernel(9, 4.0, -45.0)))
    veins -= veins.min()
    peak = veins.max()
    if peak > 0:
        veins /= peak
    texture = veins * veins  # sharpen so crystals read as streaks, not fog
    out = params["base_scale"] * x + params["texture_mix"] * texture[:, :, None]
    return np.clip(out, 0.0, 1.0)


_APPLY = {
    "gaussian_noise": _gaussian_noise,
    "shot_noise": _shot_noise,
    "impulse_noise": _impulse_noise,
    "speckle_noise": _speckle_noise,
    "gaussian_blur": _gaussian_blur,
    "defocus_blur": _defocus_blur,
    "motion_blur": _motion_blur,
    "frosted_glass": _frosted_glass,
    "brightness": _brightness,
    "contrast": _contrast,
    "saturate": _saturate,
    "jpeg": _jpeg,
    "snow": _snow,
    "spatter": _spatter,
    "fog": _fog,
    "frost": _frost,
}


def apply_corruption(image: Image, kind: str, severity: int, rng_seed: int = 0) -> Image:
    """Corrupt one image. Severity 0 returns a bit-identical copy."""
    if kind not in _APPLY:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if not isinstance(severity, (int, np.integer)) or not 0 <= severity <= 5:
        raise SeverityOutOfRangeError(f"severity must be an integer in [0, 5], got {severity}")
    if severity == 0:
        return Image(np.array(image.data))
    params = severity_level(kind, severity)
    rng = make_rng(rng_seed, kind, severity) if kind in STOCHASTIC_KINDS else None
    x = image.data.astype(np.float64) / 255.0
    out = _APPLY[kind](x, params, rng)
    return Image(kernels.round_to_u8(out * 255.0))


def resolve_jobs(jobs: Optional[int] = None) -> int:
    """Worker count: explicit argument, else SEGROBUST_JOBS, else 1."""
    if jobs is None:
        jobs = int(os.environ.get("SEGROBUST_JOBS", "1"))
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    return jobs


MANIFEST_NAME = "corruption_manifest.json"


def generate_corrupted_dataset(
    index: DatasetIndex,
    out_root: str | Path,
    kinds: Optional[Sequence[str]] = None,
    severities: Sequence[int] = (1, 2, 3, 4, 5),
    base_seed: int = 0,
    jobs: Optional[int] = None,
) -> Path:
    """Write ``<out_root>/<kind>/<severity>/<relative image path>`` for every
    sample and a manifest describing the run.

    Every output depends only on (base_seed, kind, severity, sample index), so
    parallel and serial runs produce identical bytes. The manifest is written
    with ``"complete": false`` up front and flipped at the end, which marks
    interrupted runs.
    """
    kinds = tuple(kinds) if kinds is not None else CORRUPTION_KINDS
    for k in kinds:
        if k not in _APPLY:
            raise ValueError(f"unknown corruption kind {k!r}")
    for s in severities:
        if not 0 <= int(s) <= 5:
            raise SeverityOutOfRangeError(f"severity must be in [0, 5], got {s}")

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest_path = out_root / MANIFEST_NAME
    header = {
        "schema_version": 1,
        "params_schema_version": PARAMS_SCHEMA_VERSION,
        "base_seed": base_seed,
        "kinds": list(kinds),
        "severities": [int(s) for s in severities],
        "num_samples": len(index),
        "complete": False,
    }
    manifest_path.write_text(json.dumps(header, indent=2))

    tasks = []
    for kind in kinds:
        for severity in severities:
            for i, sample in enumerate(index.samples):
                tasks.append((kind, int(severity), i, sample))

    def run_one(task):
        kind, severity, i, sample = task
        rel = index.relative_sample_path(sample)
        dest = out_root / kind / str(severity) / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        seed = derive_seed(base_seed, kind, severity, i)
        corrupted = apply_corruption(load_image(sample.image_path), kind, severity, seed)
        save_image(corrupted, dest)
        return {
            "kind": kind,
            "severity": severity,
            "index": i,
            "image": str(Path(kind) / str(severity) / rel),
            "label": os.path.relpath(sample.label_path, index.root),
            "seed": seed,
        }

    n_jobs = resolve_jobs(jobs)
    if n_jobs == 1:
        entries = [run_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            entries = list(pool.map(run_one, tasks))

    header["complete"] = True
    header["entries"] = entries
    manifest_path.write_text(json.dumps(header, indent=2))
    return manifest_path
