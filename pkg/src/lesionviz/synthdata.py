"""Brain-like phantoms with injected square or blurred-disk lesions.

Every sample's randomness comes from ``(seed, sample_index)`` alone, so any
subset of a dataset can be regenerated bit-for-bit.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataIOError, PlacementError
from .io import atomic_write_text, read_pgm, write_pgm

SPLITS = ("train", "val", "test")
SHAPES = ("sharp_square", "gaussian_circle")
MANIFEST_NAME = "manifest.tsv"
_MANIFEST_MAGIC = "#lesionviz-manifest 1"

N_WAVES = 4
NOISE_AMPLITUDE = 0.05
PLACEMENT_ATTEMPTS = 200


@dataclass(frozen=True)
class PhantomSpec:
    height: int = 64
    width: int = 64
    seed: int = 0
    texture_scale: float = 3.0
    ellipse_margin: float = 0.08

    def __post_init__(self):
        if self.height < 32 or self.width < 32:
            raise ConfigError(f"phantom.height/width must be >= 32, got {self.height}x{self.width}")
        if self.texture_scale <= 0:
            raise ConfigError(f"phantom.texture_scale must be positive, got {self.texture_scale}")
        if not 0 <= self.ellipse_margin < 0.5:
            raise ConfigError(f"phantom.ellipse_margin must be in [0, 0.5), got {self.ellipse_margin}")


@dataclass(frozen=True)
class LesionSpec:
    shape: str = "sharp_square"
    size_range: tuple = (4, 8)
    intensity_delta_range: tuple = (0.25, 0.45)
    blur_sigma: float = 1.5
    count_range: tuple = (1, 3)

    def __post_init__(self):
        object.__setattr__(self, "size_range", tuple(self.size_range))
        object.__setattr__(self, "intensity_delta_range", tuple(self.intensity_delta_range))
        object.__setattr__(self, "count_range", tuple(int(c) for c in self.count_range))
        if self.shape not in SHAPES:
            raise ConfigError(f"lesion.shape must be one of {SHAPES}, got {self.shape!r}")
        lo, hi = self.size_range
        if lo <= 0 or hi < lo:
            raise ConfigError(f"lesion.size_range must satisfy 0 < min <= max, got {self.size_range}")
        dlo, dhi = self.intensity_delta_range
        if not -1 <= dlo <= dhi <= 1:
            raise ConfigError(f"lesion.intensity_delta_range must lie in [-1, 1], got "
                              f"{self.intensity_delta_range}")
        if self.blur_sigma < 0:
            raise ConfigError(f"lesion.blur_sigma must be >= 0, got {self.blur_sigma}")
        clo, chi = self.count_range
        if clo < 1 or chi < clo:
            raise ConfigError(f"lesion.count_range must satisfy 1 <= min <= max, got {self.count_range}")


@dataclass
class SampleRecord:
    path: str
    label: int
    split: str
    lesions: list = field(default_factory=list)


@dataclass
class DatasetManifest:
    dataset_id: str
    phantom: PhantomSpec
    lesion: LesionSpec
    counts: dict
    records: list
    seed: int
    root: Path = None

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]


def phantom_mask(spec: PhantomSpec) -> np.ndarray:
    """Boolean ``[H, W]`` ellipse mask shared by every phantom of ``spec``."""
    h, w = spec.height, spec.width
    a = 0.5 * h * (1 - spec.ellipse_margin)
    b = 0.5 * w * (1 - spec.ellipse_margin)
    r = (np.arange(h) + 0.5 - 0.5 * h) / a
    c = (np.arange(w) + 0.5 - 0.5 * w) / b
    return r[:, None] ** 2 + c[None, :] ** 2 <= 1.0


def generate_phantom(spec: PhantomSpec, sample_index: int) -> np.ndarray:
    """Smooth masked texture rescaled to [0.1, 0.9] inside the ellipse, 0 outside."""
    rng = np.random.default_rng([spec.seed, sample_index])
    h, w = spec.height, spec.width
    rr = np.arange(h)[:, None] / h
    cc = np.arange(w)[None, :] / w
    tex = np.zeros((h, w))
    for _ in range(N_WAVES):
        theta = rng.uniform(0, np.pi)
        freq = spec.texture_scale * rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        tex += amp * np.cos(2 * np.pi * freq * (np.cos(theta) * rr + np.sin(theta) * cc) + phase)
    tex += NOISE_AMPLITUDE * rng.standard_normal((h, w))
    mask = phantom_mask(spec)
    inside = tex[mask]
    lo, hi = inside.min(), inside.max()
    out = np.zeros((h, w))
    out[mask] = 0.1 + 0.8 * (inside - lo) / (hi - lo)
    return out[None]


def _plane(image):
    img = np.array(image, dtype=np.float64)
    return img, (img[0] if img.ndim == 3 else img)


def inject_square(image, center, side: int, delta: float, mask=None) -> np.ndarray:
    """Add ``delta`` to a ``side`` x ``side`` square, clipped to [0, 1].

    The square spans rows ``row - side // 2`` onward (likewise columns). It
    must lie inside ``mask``; by default the mask is the nonzero support.
    """
    out, plane = _plane(image)
    mask = plane > 0 if mask is None else np.asarray(mask, dtype=bool)
    r0, c0 = int(center[0]) - side // 2, int(center[1]) - side // 2
    h, w = plane.shape
    if side < 1 or r0 < 0 or c0 < 0 or r0 + side > h or c0 + side > w or \
            not mask[r0:r0 + side, c0:c0 + side].all():
        raise PlacementError(f"square of side {side} at {tuple(center)} leaves the mask")
    region = plane[r0:r0 + side, c0:c0 + side]
    region[...] = np.clip(region + delta, 0.0, 1.0)
    return out


def circle_profile(distance, radius: float, blur_sigma: float) -> np.ndarray:
    """Radial lesion weight: 1 inside ``radius``, Gaussian fall-off to ``radius + 2*sigma``, then 0."""
    d = np.asarray(distance, dtype=np.float64)
    if blur_sigma == 0:
        return (d <= radius).astype(np.float64)
    g = np.exp(-((d - radius) ** 2) / (2.0 * blur_sigma ** 2))
    g = np.where(d <= radius, 1.0, g)
    return np.where(d <= radius + 2.0 * blur_sigma, g, 0.0)


def inject_gaussian_circle(image, center, radius: float, blur_sigma: float, delta: float,
                           mask=None) -> np.ndarray:
    """Add ``delta * profile(distance to center)``, clipped to [0, 1].

    The disk of radius ``radius + 3*blur_sigma`` must fit inside the mask.
    """
    out, plane = _plane(image)
    mask = plane > 0 if mask is None else np.asarray(mask, dtype=bool)
    h, w = plane.shape
    reach = radius + 3.0 * blur_sigma
    cr, cc = float(center[0]), float(center[1])
    if cr - reach < 0 or cc - reach < 0 or cr + reach > h - 1 or cc + reach > w - 1:
        raise PlacementError(f"disk of reach {reach:.2f} at {tuple(center)} leaves the image")
    d = np.hypot(np.arange(h)[:, None] - cr, np.arange(w)[None, :] - cc)
    if not mask[d <= reach].all():
        raise PlacementError(f"disk of reach {reach:.2f} at {tuple(center)} leaves the mask")
    g = circle_profile(d, radius, blur_sigma)
    touched = g > 0
    plane[touched] = np.clip(plane[touched] + delta * g[touched], 0.0, 1.0)
    return out


def add_random_lesions(image, lesion: LesionSpec, rng: np.random.Generator, mask) -> tuple:
    """Inject ``count_range``-many lesions at random valid spots; returns (image, params)."""
    count = int(rng.integers(lesion.count_range[0], lesion.count_range[1] + 1))
    h, w = image.shape[-2:]
    params = []
    for _ in range(count):
        delta = float(rng.uniform(*lesion.intensity_delta_range))
        if lesion.shape == "sharp_square":
            size = int(rng.integers(int(lesion.size_range[0]), int(lesion.size_range[1]) + 1))
        else:
            size = float(rng.uniform(*lesion.size_range))
        for _ in range(PLACEMENT_ATTEMPTS):
            row, col = int(rng.integers(0, h)), int(rng.integers(0, w))
            try:
                if lesion.shape == "sharp_square":
                    image = inject_square(image, (row, col), size, delta, mask)
                    params.append({"shape": lesion.shape, "row": row, "col": col,
                                   "side": size, "delta": delta})
                else:
                    image = inject_gaussian_circle(image, (row, col), size, lesion.blur_sigma, delta, mask)
                    params.append({"shape": lesion.shape, "row": row, "col": col, "radius": size,
                                   "blur_sigma": lesion.blur_sigma, "delta": delta})
                break
            except PlacementError:
                continue
        else:
            raise PlacementError(f"no valid position for a lesion of size {size} "
                                 f"after {PLACEMENT_ATTEMPTS} attempts")
    return image, params


def make_dataset(phantom: PhantomSpec, lesion: LesionSpec, sizes, seed: int, root) -> DatasetManifest:
    """Write a labelled train/val/test dataset of PGM images plus its manifest."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or min(sizes) < 1:
        raise ConfigError(f"data sizes must be three positive counts (train, val, test), got {sizes}")
    root = Path(root)
    mask = phantom_mask(phantom)
    records = []
    index = 0
    for split_no, (split, n) in enumerate(zip(SPLITS, sizes)):
        labels = np.zeros(n, dtype=int)
        labels[np.random.default_rng([seed, split_no, 7]).permutation(n)[: n // 2]] = 1
        for i in range(n):
            image = generate_phantom(phantom, index)
            lesions = []
            if labels[i]:
                image, lesions = add_random_lesions(image, lesion, np.random.default_rng([seed, index, 1]), mask)
            rel = f"{split}/{i:06d}.pgm"
            write_pgm(root / rel, image)
            records.append(SampleRecord(rel, int(labels[i]), split, lesions))
            index += 1
    manifest = DatasetManifest(
        dataset_id=f"{lesion.shape}-{phantom.height}x{phantom.width}-seed{seed}",
        phantom=phantom, lesion=lesion, counts=dict(zip(SPLITS, sizes)),
        records=records, seed=int(seed), root=root,
    )
    write_manifest(manifest, root / MANIFEST_NAME)
    return manifest


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def manifest_text(m: DatasetManifest) -> str:
    lines = [
        _MANIFEST_MAGIC,
        f"#dataset_id\t{m.dataset_id}",
        f"#seed\t{m.seed}",
        f"#phantom\t{_json(asdict(m.phantom))}",
        f"#lesion\t{_json(asdict(m.lesion))}",
        f"#counts\t{_json(m.counts)}",
        "path\tlabel\tsplit\tlesions",
    ]
    lines += [f"{r.path}\t{r.label}\t{r.split}\t{_json(r.lesions)}" for r in m.records]
    return "\n".join(lines) + "\n"


def write_manifest(m: DatasetManifest, path) -> None:
    atomic_write_text(Path(path), manifest_text(m))


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {path}: {exc}") from exc
    if not lines or lines[0] != _MANIFEST_MAGIC:
        raise DataIOError(f"{path}: not a lesionviz manifest")
    header, records = {}, []
    try:
        for line in lines[1:]:
            if line.startswith("#"):
                key, value = line[1:].split("\t", 1)
                header[key] = value
            elif line.startswith("path\t"):
                continue
            elif line:
                p, label, split, lesions = line.split("\t")
                records.append(SampleRecord(p, int(label), split, json.loads(lesions)))
        return DatasetManifest(
            dataset_id=header["dataset_id"],
            phantom=PhantomSpec(**json.loads(header["phantom"])),
            lesion=LesionSpec(**json.loads(header["lesion"])),
            counts=json.loads(header["counts"]),
            records=records,
            seed=int(header["seed"]),
            root=path.parent,
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataIOError(f"{path}: malformed manifest ({exc})") from exc


def load_split(manifest: DatasetManifest, split: str) -> tuple:
    """Images ``[N, 1, H, W]`` and labels ``[N]`` of one split."""
    recs = manifest.split(split)
    if not recs:
        raise DataIOError(f"dataset {manifest.dataset_id} has no {split!r} samples")
    images = np.stack([read_pgm(manifest.root / r.path) for r in recs])[:, None]
    return images, np.array([r.label for r in recs], dtype=np.float64)
