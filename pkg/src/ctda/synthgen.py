"""
Synthetic mammography patch generator.

Patches are built from a power-law filtered Gaussian texture, optionally with a
simulated mass (anisotropic Gaussian profile) or a calcification cluster, and
can be remapped with a sigmoid LUT to define the second image domain.

The texture fills the background band ``texture_range`` before lesions are added,
so lesion intensities (fractions of the maximum intensity 1.0) sit above it.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple

import imageio.v3 as iio
import numpy as np
from scipy.special import expit

from ctda.errors import ConfigError, DatasetIOError, GeneratorError

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
MASK64 = (1 << 64) - 1


class PatchClass(str, Enum):
    NORMAL = "normal"
    MASS = "mass"
    CALCIFICATION = "calcification"

    @property
    def index(self) -> int:
        return CLASSES.index(self)


CLASSES: List[PatchClass] = [PatchClass.NORMAL, PatchClass.MASS, PatchClass.CALCIFICATION]


class Domain(str, Enum):
    RAW = "raw"
    LUT = "lut"

    @property
    def bit(self) -> int:
        return 0 if self is Domain.RAW else 1


class DatasetMode(str, Enum):
    MIXED = "mixed"
    AUGMENTED = "augmented"


def _check_range(name: str, bounds: Tuple[float, float]) -> None:
    low, high = bounds
    if low > high:
        raise ConfigError(f"{name} must satisfy low <= high, got {bounds}")


@dataclass(frozen=True)
class LutParams:
    """Sigmoid LUT parameters, as fractions of the intensity range."""

    center: float = 0.5
    width: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.center < 1.0:
            raise ConfigError(f"LUT center must lie in (0, 1), got {self.center}")
        if self.width <= 0.0:
            raise ConfigError(f"LUT width must be positive, got {self.width}")


@dataclass(frozen=True)
class GeneratorConfig:
    patch_size: int = 256
    beta_range: Tuple[float, float] = (1.2, 1.6)
    texture_range: Tuple[float, float] = (0.0, 0.7)
    mass_radius_range: Tuple[float, float] = (5.0, 45.0)
    mass_intensity_range: Tuple[float, float] = (0.90, 1.00)
    calc_count_range: Tuple[int, int] = (5, 12)
    calc_area_side_range: Tuple[int, int] = (15, 60)
    calc_intensity_range: Tuple[float, float] = (0.90, 1.00)
    lut: LutParams = field(default_factory=LutParams)
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 16:
            raise ConfigError(f"patch_size must be >= 16, got {self.patch_size}")
        for f in fields(self):
            if f.name.endswith("_range"):
                _check_range(f.name, getattr(self, f.name))
        low, high = self.texture_range
        if not (0.0 <= low and high <= 1.0):
            raise ConfigError(f"texture_range must lie within [0, 1], got {self.texture_range}")
        for name in ("mass_intensity_range", "calc_intensity_range"):
            low, high = getattr(self, name)
            if not (0.0 < low and high <= 1.0):
                raise ConfigError(f"{name} must lie within (0, 1], got {(low, high)}")
        if self.beta_range[0] < 0:
            raise ConfigError(f"beta_range must be non-negative, got {self.beta_range}")
        if self.calc_area_side_range[1] > self.patch_size:
            raise ConfigError("calc_area_side_range exceeds patch_size")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorConfig":
        """Build a config from a JSON mapping, rejecting unknown keys."""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown generator keys: {sorted(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key == "lut":
                lut_unknown = set(value) - {"center", "width"}
                if lut_unknown:
                    raise ConfigError(f"Unknown lut keys: {sorted(lut_unknown)}")
                kwargs[key] = LutParams(**value)
            elif key.endswith("_range"):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


@dataclass
class Patch:
    pixels: np.ndarray
    class_label: PatchClass
    domain: Domain = Domain.RAW
    seed: int = 0
    beta: float = 0.0
    lesion_params: Dict[str, Any] = field(default_factory=dict)

    def replace(self, **changes) -> "Patch":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return Patch(**values)


@dataclass(frozen=True)
class MassGeometry:
    center_x: int
    center_y: int
    radius_x: float
    radius_y: float
    peak: float


@dataclass(frozen=True)
class CalcCluster:
    x0: int
    y0: int
    side: int
    dots: Tuple[Tuple[int, int, float], ...]


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def patch_seed(base_seed: int, index: int) -> int:
    """Per-patch seed; any patch can be regenerated from (base_seed, index) alone."""
    return (base_seed ^ splitmix64(index)) & MASK64


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------

def transfer_function(u, v, beta: float):
    """Power-law low-pass filter 1 / sqrt(u^2 + v^2)^beta, with the DC term set to 0."""
    if beta < 0:
        raise GeneratorError(f"beta must be non-negative, got {beta}")
    radius_sq = np.asarray(u, dtype=np.float64) ** 2 + np.asarray(v, dtype=np.float64) ** 2
    with np.errstate(divide="ignore"):
        h = np.where(radius_sq > 0, radius_sq ** (-beta / 2.0), 0.0)
    return h if h.ndim else float(h)


def sample_texture(config: GeneratorConfig, beta: float, seed: int) -> Patch:
    """
    Sample a normalized Gaussian texture with power-law spectrum.

    White noise is filtered in the Fourier domain by ``transfer_function`` and the real
    part of the inverse transform is min-max normalized to [0, 1].
    """
    if beta < 0:
        raise GeneratorError(f"beta must be non-negative, got {beta}")
    size = config.patch_size
    if size % 2:
        raise GeneratorError(f"patch dimensions must be even, got {size}")

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((size, size))

    freqs = np.fft.fftfreq(size) * size
    u, v = np.meshgrid(freqs, freqs, indexing="ij")
    field_ = np.fft.ifft2(np.fft.fft2(noise) * transfer_function(u, v, beta)).real

    low, high = field_.min(), field_.max()
    if not high - low > 1e-12:
        raise GeneratorError("degenerate constant texture; check the random generator seeding")
    pixels = (field_ - low) / (high - low)

    return Patch(pixels=pixels, class_label=PatchClass.NORMAL, seed=seed, beta=float(beta))


def scale_texture(patch: Patch, texture_range: Tuple[float, float]) -> Patch:
    """Map a [0, 1] texture affinely onto the background band ``texture_range``."""
    low, high = texture_range
    return patch.replace(pixels=low + (high - low) * patch.pixels)


# ---------------------------------------------------------------------------
# Lesions
# ---------------------------------------------------------------------------

def sample_mass_geometry(config: GeneratorConfig, rng: np.random.Generator) -> MassGeometry:
    size = config.patch_size
    return MassGeometry(
        center_x=int(rng.integers(0, size)),
        center_y=int(rng.integers(0, size)),
        radius_x=float(rng.uniform(*config.mass_radius_range)),
        radius_y=float(rng.uniform(*config.mass_radius_range)),
        peak=float(rng.uniform(*config.mass_intensity_range)),
    )


def gaussian_profile(shape: Tuple[int, int], geometry: MassGeometry) -> np.ndarray:
    rows, cols = np.ogrid[: shape[0], : shape[1]]
    exponent = ((cols - geometry.center_x) ** 2) / (2.0 * geometry.radius_x ** 2) + (
        (rows - geometry.center_y) ** 2
    ) / (2.0 * geometry.radius_y ** 2)
    return np.exp(-exponent)


def insert_mass(patch: Patch, geometry: MassGeometry) -> Patch:
    """
    Add an axis-aligned Gaussian bump whose amplitude makes the center pixel equal
    ``geometry.peak`` (a fraction of the maximum intensity 1.0), then clip to [0, 1].
    """
    pixels = patch.pixels
    amplitude = geometry.peak - pixels[geometry.center_y, geometry.center_x]
    out = np.clip(pixels + amplitude * gaussian_profile(pixels.shape, geometry), 0.0, 1.0)

    params = asdict(geometry)
    params["amplitude"] = float(amplitude)
    return patch.replace(pixels=out, class_label=PatchClass.MASS, lesion_params=params)


def sample_calc_cluster(config: GeneratorConfig, rng: np.random.Generator) -> CalcCluster:
    size = config.patch_size
    low, high = config.calc_area_side_range
    side = int(rng.integers(low, high + 1))
    x0 = int(rng.integers(0, size - side + 1))
    y0 = int(rng.integers(0, size - side + 1))

    count = int(rng.integers(config.calc_count_range[0], config.calc_count_range[1] + 1))
    dots = tuple(
        (
            int(x0 + rng.integers(0, side)),
            int(y0 + rng.integers(0, side)),
            float(rng.uniform(*config.calc_intensity_range)),
        )
        for _ in range(count)
    )
    return CalcCluster(x0=x0, y0=y0, side=side, dots=dots)


# radius-1 disc
DOT_OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


def insert_calcifications(patch: Patch, cluster: CalcCluster) -> Patch:
    """Overwrite a radius-1 disc at every dot of the cluster with the dot intensity."""
    if cluster.x0 < 0 or cluster.y0 < 0:
        raise GeneratorError("calcification cluster must lie inside the patch")
    height, width = patch.pixels.shape
    if cluster.x0 + cluster.side > width or cluster.y0 + cluster.side > height:
        raise GeneratorError("calcification cluster must lie inside the patch")

    out = patch.pixels.copy()
    for x, y, intensity in cluster.dots:
        for dx, dy in DOT_OFFSETS:
            px, py = x + dx, y + dy
            if 0 <= px < width and 0 <= py < height:
                out[py, px] = intensity

    params = {
        "x0": cluster.x0,
        "y0": cluster.y0,
        "side": cluster.side,
        "dots": [list(dot) for dot in cluster.dots],
    }
    return patch.replace(pixels=np.clip(out, 0.0, 1.0), class_label=PatchClass.CALCIFICATION,
                         lesion_params=params)


# ---------------------------------------------------------------------------
# LUT
# ---------------------------------------------------------------------------

def sigmoid_lut(values, params: LutParams, rescale: bool = True):
    """sigma((p - center) / width), optionally rescaled so [0, 1] maps onto [0, 1]."""
    values = np.asarray(values, dtype=np.float64)
    out = expit((values - params.center) / params.width)
    if rescale:
        low = expit((0.0 - params.center) / params.width)
        high = expit((1.0 - params.center) / params.width)
        out = (out - low) / (high - low)
    return out


def apply_lut(patch: Patch, params: LutParams) -> Patch:
    if patch.domain is Domain.LUT:
        raise GeneratorError("LUT already applied to this patch")
    pixels = np.clip(sigmoid_lut(patch.pixels, params), 0.0, 1.0)
    return patch.replace(pixels=pixels, domain=Domain.LUT)


# ---------------------------------------------------------------------------
# Patches and datasets
# ---------------------------------------------------------------------------

def patch_from_seed(config: GeneratorConfig, seed: int, class_label: PatchClass) -> Patch:
    """Deterministically build a raw-domain patch of the given class from its seed."""
    param_rng = np.random.default_rng([seed, 1])
    beta = float(param_rng.uniform(*config.beta_range))
    patch = scale_texture(sample_texture(config, beta, seed), config.texture_range)

    if class_label is PatchClass.MASS:
        patch = insert_mass(patch, sample_mass_geometry(config, param_rng))
    elif class_label is PatchClass.CALCIFICATION:
        patch = insert_calcifications(patch, sample_calc_cluster(config, param_rng))
    return patch


def sample_patch(config: GeneratorConfig, index: int, class_label: PatchClass,
                 base_seed: int | None = None) -> Patch:
    base_seed = config.seed if base_seed is None else base_seed
    return patch_from_seed(config, patch_seed(base_seed, index), class_label)


def regenerate(record: Dict[str, Any], config: GeneratorConfig) -> Patch:
    """Rebuild a patch from a manifest record."""
    patch = patch_from_seed(config, int(record["seed"]), PatchClass(record["class"]))
    if Domain(record["domain"]) is Domain.LUT:
        patch = apply_lut(patch, config.lut)
    return patch


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Intensities in [0, 1] to 16-bit integers."""
    return np.rint(np.clip(pixels, 0.0, 1.0) * 65535.0).astype(np.uint16)


def dequantize(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 65535.0


def _render_base(args: Tuple[GeneratorConfig, int, PatchClass]) -> Patch:
    config, index, class_label = args
    return sample_patch(config, index, class_label)


def generate_dataset(config: GeneratorConfig, n_patches: int, mode: DatasetMode | str,
                     split_seed: int, out_dir: str | Path, jobs: int = 1) -> Path:
    """
    Generate a class-balanced synthetic dataset into ``out_dir``.

    Base patch ``i`` has class ``CLASSES[i % 3]``. In mixed mode every base patch gets one
    domain from a seeded coin flip; in augmented mode both domains are written. Images go to
    ``patches/<index>.png`` and every record is listed in ``manifest.json``.
    """
    try:
        mode = DatasetMode(mode)
    except ValueError:
        raise ConfigError(f"Invalid dataset mode '{mode}', expected one of "
                          f"{[m.value for m in DatasetMode]}")
    if n_patches <= 0 or n_patches % len(CLASSES):
        raise ConfigError(f"n_patches must be a positive multiple of {len(CLASSES)}, got {n_patches}")

    out_dir = Path(out_dir)
    patches_dir = out_dir / "patches"
    try:
        patches_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetIOError(f"Cannot create dataset directory {patches_dir}: {e}")

    tasks = [(config, i, CLASSES[i % len(CLASSES)]) for i in range(n_patches)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            bases = list(executor.map(_render_base, tasks, chunksize=16))
    else:
        bases = [_render_base(task) for task in tasks]

    split_rng = np.random.default_rng(split_seed)
    coins = split_rng.integers(0, 2, size=n_patches)

    records = []
    for index, base in enumerate(bases):
        if mode is DatasetMode.MIXED:
            domains = [Domain.LUT if coins[index] else Domain.RAW]
        else:
            domains = [Domain.RAW, Domain.LUT]

        for domain in domains:
            patch = apply_lut(base, config.lut) if domain is Domain.LUT else base
            file_name = f"patches/{len(records):05d}.png"
            _write_png(out_dir / file_name, patch.pixels)
            records.append(_record(file_name, index, patch))

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "generator": config.to_dict(),
        "mode": mode.value,
        "split_seed": split_seed,
        "records": records,
    }
    _write_json(out_dir / "manifest.json", manifest)
    logger.info(f"Wrote {len(records)} patches ({mode.value}) to {out_dir}")
    return out_dir


def _record(file_name: str, index: int, patch: Patch) -> Dict[str, Any]:
    return {
        "file": file_name,
        "index": index,
        "class": patch.class_label.value,
        "domain": patch.domain.value,
        "seed": patch.seed,
        "beta": patch.beta,
        "lesion_params": patch.lesion_params,
    }


def _write_png(path: Path, pixels: np.ndarray) -> None:
    try:
        iio.imwrite(path, quantize(pixels), extension=".png")
    except OSError as e:
        raise DatasetIOError(f"Cannot write image {path}: {e}")


def read_png(path: str | Path) -> np.ndarray:
    try:
        return dequantize(iio.imread(path))
    except OSError as e:
        raise DatasetIOError(f"Cannot read image {path}: {e}")


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise DatasetIOError(f"Cannot write {path}: {e}")


def load_dataset(directory: str | Path) -> Tuple[GeneratorConfig, List[Dict[str, Any]]]:
    """Read a dataset manifest; returns the generator config echo and the records."""
    manifest_path = Path(directory) / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DatasetIOError(f"No dataset manifest at {manifest_path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetIOError(f"Cannot read manifest {manifest_path}: {e}")

    version = manifest.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise DatasetIOError(f"Unsupported manifest schema_version {version}")
    return GeneratorConfig.from_dict(manifest["generator"]), manifest["records"]


# ---------------------------------------------------------------------------
# Texture statistics
# ---------------------------------------------------------------------------

def lag1_autocorrelation(pixels: np.ndarray) -> float:
    """Pearson correlation between horizontally adjacent pixels."""
    left = pixels[:, :-1].ravel()
    right = pixels[:, 1:].ravel()
    return float(np.corrcoef(left, right)[0, 1])


def radial_power_spectrum(pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Radially averaged power spectrum; returns (integer radii, mean power)."""
    size = pixels.shape[0]
    power = np.abs(np.fft.fft2(pixels - pixels.mean())) ** 2
    freqs = np.fft.fftfreq(size) * size
    u, v = np.meshgrid(freqs, freqs, indexing="ij")
    radius = np.rint(np.sqrt(u ** 2 + v ** 2)).astype(int)

    counts = np.bincount(radius.ravel())
    sums = np.bincount(radius.ravel(), weights=power.ravel())
    radii = np.arange(1, size // 2)
    return radii, sums[radii] / counts[radii]


def spectral_slope(pixels: np.ndarray, band: Tuple[float, float] = (0.02, 0.25)) -> float:
    """
    Log-log slope of the radial power spectrum over a mid-frequency band, given as
    fractions of the patch size. A power-law texture with exponent beta gives about -2*beta.
    """
    radii, power = radial_power_spectrum(pixels)
    size = pixels.shape[0]
    mask = (radii >= band[0] * size) & (radii <= band[1] * size)
    slope, _ = np.polyfit(np.log(radii[mask]), np.log(power[mask]), 1)
    return float(slope)


def class_counts(records: Iterable[Dict[str, Any]]) -> Dict[Tuple[str, str], int]:
    counts: Dict[Tuple[str, str], int] = {}
    for record in records:
        key = (record["class"], record["domain"])
        counts[key] = counts.get(key, 0) + 1
    return counts
