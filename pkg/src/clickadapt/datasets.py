"""Dataset ingestion and synthetic corpora.

Datasets arrive through a line-oriented manifest::

    # comment
    resolution 128 128          (optional; default 128 128)
    <imageId> <imagePath> <maskPath> [<classTag>]

Paths are resolved relative to the manifest file and may be PNG or portable
pixmap/graymap rasters.  Images are bilinearly resampled to the working
resolution and scaled to [0, 1]; masks are nearest-neighbor resampled and
binarized at 0.5, and must be nonempty.  Two synthetic families provide a
desk-scale domain shift: family A is bright filled ellipses on smooth noise
backgrounds, family B is dark elongated bars (inverted contrast polarity,
much higher elongation).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
from PIL import Image
from scipy.ndimage import map_coordinates

from .errors import DecodeError, EmptyGroundTruth, MissingFile, ParseError

DEFAULT_RESOLUTION = (128, 128)
SUPPORTED_SUFFIXES = {".png", ".ppm", ".pgm", ".pbm", ".pnm"}

MIN_MASK_FRACTION = 0.02
MAX_MASK_FRACTION = 0.40


class DatasetItem(NamedTuple):
    image_id: str
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    class_tag: str | None = None


@dataclass
class Dataset:
    items: list[DatasetItem]
    resolution: tuple[int, int]

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i) -> DatasetItem:
        return self.items[i]

    def __iter__(self) -> Iterator[DatasetItem]:
        return iter(self.items)


# ---------------------------------------------------------------------------
# raster ingestion
# ---------------------------------------------------------------------------


def _open_raster(path: Path) -> Image.Image:
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise DecodeError(
            f"unsupported raster format {path.suffix!r} for {path.name!r} "
            f"(supported: {', '.join(sorted(SUPPORTED_SUFFIXES))})"
        )
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise MissingFile(f"raster file not found: {path}")
    except Exception as exc:
        raise DecodeError(f"cannot decode {path.name!r}: {exc}") from exc
    return img


def ingest_pair(
    image_path, mask_path, resolution: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Load one image/mask pair at the working resolution.

    The image comes back as (H, W, 3) float64 in [0, 1] (grayscale inputs are
    replicated across channels); the mask as (H, W) uint8 in {0, 1}.
    """
    h, w = resolution
    img = _open_raster(image_path).convert("RGB")
    if img.size != (w, h):
        img = img.resize((w, h), Image.BILINEAR)
    image = np.asarray(img, dtype=np.float64) / 255.0

    m = _open_raster(mask_path).convert("L")
    if m.size != (w, h):
        m = m.resize((w, h), Image.NEAREST)
    mask = (np.asarray(m, dtype=np.float64) / 255.0 >= 0.5).astype(np.uint8)
    return image, mask


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def load_manifest(path, resolution: tuple[int, int] | None = None) -> Dataset:
    """Load and fully validate a manifest: parse, ingest, check masks.

    Resolution precedence: explicit argument, then an in-file ``resolution``
    directive, then 128x128.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    base = path.parent

    directive: tuple[int, int] | None = None
    entries: list[tuple[str, Path, Path, str | None]] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "resolution":
            if directive is not None:
                raise ParseError(f"line {lineno}: duplicate resolution directive")
            if len(tokens) != 3:
                raise ParseError(f"line {lineno}: resolution needs exactly H and W")
            try:
                directive = (int(tokens[1]), int(tokens[2]))
            except ValueError:
                raise ParseError(f"line {lineno}: resolution values must be integers")
            if directive[0] < 1 or directive[1] < 1:
                raise ParseError(f"line {lineno}: resolution must be positive")
            continue
        if len(tokens) not in (3, 4):
            raise ParseError(
                f"line {lineno}: expected 'id imagePath maskPath [classTag]', "
                f"got {len(tokens)} tokens"
            )
        image_id, image_path, mask_path = tokens[:3]
        tag = tokens[3] if len(tokens) == 4 else None
        if image_id in seen:
            raise ParseError(f"line {lineno}: duplicate image id {image_id!r}")
        seen.add(image_id)
        entries.append((image_id, base / image_path, base / mask_path, tag))

    res = resolution if resolution is not None else (directive or DEFAULT_RESOLUTION)
    items = []
    for image_id, image_path, mask_path, tag in entries:
        for p in (image_path, mask_path):
            if not p.is_file():
                raise MissingFile(f"entry {image_id!r}: file not found: {p}")
        image, mask = ingest_pair(image_path, mask_path, res)
        if not mask.any():
            raise EmptyGroundTruth(
                f"entry {image_id!r}: ground-truth mask is empty after ingestion"
            )
        items.append(DatasetItem(image_id, image, mask, tag))
    return Dataset(items, res)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Save a dataset as PNG pairs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = dataset.resolution
    lines = [f"resolution {h} {w}"]
    for it in dataset:
        image_name = f"{it.image_id}.png"
        mask_name = f"{it.image_id}_mask.png"
        Image.fromarray(np.round(it.image * 255).astype(np.uint8)).save(out / image_name)
        Image.fromarray(it.mask * np.uint8(255), mode="L").save(out / mask_name)
        tag = f" {it.class_tag}" if it.class_tag is not None else ""
        lines.append(f"{it.image_id} {image_name} {mask_name}{tag}")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# synthetic families
# ---------------------------------------------------------------------------


def _upsample_bilinear(grid: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    gh, gw = grid.shape
    rr = np.linspace(0.0, gh - 1.0, h)
    cc = np.linspace(0.0, gw - 1.0, w)
    coords = np.stack(np.meshgrid(rr, cc, indexing="ij"))
    return map_coordinates(grid, coords, order=1, mode="nearest")


def _rotated_coords(shape, center, theta):
    h, w = shape
    rows = np.arange(h)[:, None] - center[0]
    cols = np.arange(w)[None, :] - center[1]
    u = rows * np.cos(theta) + cols * np.sin(theta)
    v = -rows * np.sin(theta) + cols * np.cos(theta)
    return u, v


def _sample_shape_mask(family: str, rng, shape) -> np.ndarray:
    h, w = shape
    for _ in range(60):
        center = (rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w)
        theta = rng.uniform(0.0, np.pi)
        if family == "A":
            frac = rng.uniform(0.03, 0.15)
            ratio = rng.uniform(1.0, 2.0)
            area = frac * h * w
            a = np.sqrt(area / (np.pi * ratio))
            b = a * ratio
            u, v = _rotated_coords(shape, center, theta)
            mask = ((u / b) ** 2 + (v / a) ** 2 <= 1.0).astype(np.uint8)
        else:
            frac = rng.uniform(0.03, 0.10)
            ratio = rng.uniform(3.5, 7.0)
            area = frac * h * w
            length = np.sqrt(area * ratio)
            width = np.sqrt(area / ratio)
            u, v = _rotated_coords(shape, center, theta)
            mask = ((np.abs(u) <= length / 2) & (np.abs(v) <= width / 2)).astype(np.uint8)
        got = mask.mean()
        if mask.any() and MIN_MASK_FRACTION <= got <= MAX_MASK_FRACTION:
            return mask
    raise ValueError(f"could not sample a valid family-{family} mask")


def _render_item(family: str, rng, shape) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    mask = _sample_shape_mask(family, rng, shape)

    base = rng.uniform(0.40, 0.60)
    coarse = _upsample_bilinear(rng.normal(0.0, 0.05, (9, 9)), shape)
    contrast = rng.uniform(0.18, 0.40)
    sign = 1.0 if family == "A" else -1.0

    gray = base + coarse + sign * contrast * mask
    tint = rng.uniform(-0.03, 0.03, 3)
    image = gray[..., None] + tint[None, None, :]
    image = image + rng.normal(0.0, 0.02, (h, w, 3))
    return np.clip(image, 0.0, 1.0), mask


def synth_dataset(
    family: str,
    count: int,
    seed: int,
    resolution: tuple[int, int] = DEFAULT_RESOLUTION,
) -> Dataset:
    """Generate a deterministic in-memory dataset of the given family."""
    if family not in ("A", "B"):
        raise ValueError(f"family must be 'A' or 'B', got {family!r}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    items = []
    for i in range(count):
        rng = np.random.default_rng([seed, i, ord(family)])
        image, mask = _render_item(family, rng, resolution)
        items.append(DatasetItem(f"{family}{i:03d}", image, mask, None))
    return Dataset(items, resolution)
