"""Synthetic HPLC-like chromatograms for nine oils and their binary blends.

Every oil is a sum of Gaussian peaks. All oils share one peak template and
differ by per-peak shifts in position, width and height; ``overlap`` pulls
those parameters back toward the template (``overlap=1`` makes every oil
identical). Mixtures are convex combinations of the rendered pure
profiles, followed by multiplicative Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import Dataset, Example, LabelSpace, atomic_write_text

OILS = ("soybean", "peanut", "sunflower", "corn", "palm", "sesame", "cotton", "rap", "rice_bran")
DEFAULT_D = 1607
PROFILE_SEED = 20130401
N_PEAKS = 45


@dataclass(frozen=True)
class OilProfile:
    name: str
    peaks: Tuple[Tuple[float, float, float], ...]  # (center, width, height)

    def __post_init__(self):
        if len(self.peaks) < 3:
            raise ValueError(f"profile {self.name!r} needs at least 3 peaks")
        for c, w, h in self.peaks:
            if w <= 0 or h <= 0:
                raise ValueError(f"profile {self.name!r}: widths and heights must be positive")


@dataclass(frozen=True)
class MixtureSpec:
    """One table row: a pure oil or ``(base, adulterant)`` pair.

    ``ratio_range`` bounds the adulterant fraction; pure rows ignore it.
    """

    components: Tuple[str, ...]
    count: int
    ratio_range: Tuple[float, float] = (0.05, 0.99)

    def __post_init__(self):
        if not 1 <= len(self.components) <= 2:
            raise ValueError("a row mixes one or two oils")
        lo, hi = self.ratio_range
        if not 0.05 <= lo <= hi <= 0.99:
            raise ValueError(f"ratio range {self.ratio_range} must satisfy 0.05 <= lo <= hi <= 0.99")
        if self.count < 0:
            raise ValueError("count must be >= 0")


TABLE1_ROWS = (
    MixtureSpec(("soybean",), 34),
    MixtureSpec(("peanut",), 39),
    MixtureSpec(("sunflower",), 17),
    MixtureSpec(("corn",), 10),
    MixtureSpec(("palm",), 27),
    MixtureSpec(("sesame",), 37),
    MixtureSpec(("cotton",), 0),
    MixtureSpec(("rap",), 58),
    MixtureSpec(("rice_bran",), 24),
    MixtureSpec(("soybean", "sesame"), 21),
    MixtureSpec(("soybean", "palm"), 9),
    MixtureSpec(("soybean", "corn"), 3),
    MixtureSpec(("soybean", "sunflower"), 3),
    MixtureSpec(("soybean", "peanut"), 9),
    MixtureSpec(("sunflower", "sesame"), 21),
    MixtureSpec(("palm", "sesame"), 9),
    MixtureSpec(("peanut", "sesame"), 20),
    MixtureSpec(("peanut", "palm"), 9),
    MixtureSpec(("peanut", "corn"), 2),
    MixtureSpec(("peanut", "sunflower"), 9),
    MixtureSpec(("sesame", "cotton"), 9),
)


def default_profiles(d: int = DEFAULT_D, overlap: float = 0.6) -> Tuple[OilProfile, ...]:
    """The nine built-in oil profiles.

    Peak parameters are drawn once from a fixed generator, so profiles
    depend only on ``d`` and ``overlap``.
    """
    rng = np.random.default_rng(PROFILE_SEED)
    centers = np.sort(rng.uniform(0.02, 0.98, N_PEAKS)) * d
    widths = rng.uniform(0.008, 0.02, N_PEAKS) * d
    heights = rng.uniform(0.3, 1.0, N_PEAKS)
    keep = 1.0 - overlap
    out = []
    for name in OILS:
        dc = rng.normal(0.0, 0.005, N_PEAKS) * d
        lw = rng.normal(0.0, 0.2, N_PEAKS)
        lh = rng.normal(0.0, 0.25, N_PEAKS)
        c = np.clip(centers + keep * dc, 0, d - 1)
        w = widths * np.exp(keep * lw)
        h = heights * np.exp(keep * lh)
        out.append(OilProfile(name, tuple(zip(c.tolist(), w.tolist(), h.tolist()))))
    return tuple(out)


def render_profile(profile: OilProfile, d: int) -> np.ndarray:
    """Sum of Gaussian peaks on ``0..d-1``, scaled to unit maximum."""
    t = np.arange(d, dtype=float)
    y = np.zeros(d)
    for c, w, h in profile.peaks:
        y += h * np.exp(-((t - c) ** 2) / (2.0 * w * w))
    peak = y.max()
    return y / peak if peak > 0 else y


@dataclass(frozen=True)
class GeneratorConfig:
    d: int = DEFAULT_D
    noise_sigma: float = 0.05
    overlap: float = 0.6
    seed: int = 0
    rows: Tuple[MixtureSpec, ...] = TABLE1_ROWS
    profiles: Optional[Tuple[OilProfile, ...]] = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must lie in [0, 1], got {self.overlap}")

    def resolved_profiles(self) -> Tuple[OilProfile, ...]:
        return self.profiles if self.profiles is not None else default_profiles(self.d, self.overlap)

    def to_text(self) -> str:
        lines = [
            f"d = {self.d}",
            f"noise_sigma = {self.noise_sigma!r}",
            f"overlap = {self.overlap!r}",
            f"seed = {self.seed}",
        ]
        for i, row in enumerate(self.rows):
            lo, hi = row.ratio_range
            lines.append(f"row.{i} = {'&'.join(row.components)}:{row.count}:{lo!r}:{hi!r}")
        return "\n".join(lines) + "\n"


def table1_config(**overrides) -> GeneratorConfig:
    return replace(GeneratorConfig(), **overrides)


def generate(config: GeneratorConfig) -> Dataset:
    """Draw one dataset; rows keep table order, examples keep draw order."""
    profiles = {p.name: p for p in config.resolved_profiles()}
    names = tuple(p.name for p in config.resolved_profiles())
    space = LabelSpace(names)
    rendered: Dict[str, np.ndarray] = {}

    def curve(name):
        if name not in profiles:
            raise ValueError(f"unknown profile name {name!r}")
        if name not in rendered:
            rendered[name] = render_profile(profiles[name], config.d)
        return rendered[name]

    examples: List[Example] = []
    for row_no, row in enumerate(config.rows):
        curves = [curve(n) for n in row.components]
        idx = [space.index(n) for n in row.components]
        rng = np.random.default_rng([config.seed, row_no])
        for k in range(row.count):
            if len(curves) == 1:
                x = curves[0].copy()
                ratios = {idx[0]: 1.0}
            else:
                r = rng.uniform(*row.ratio_range)
                x = (1.0 - r) * curves[0] + r * curves[1]
                ratios = {idx[0]: 1.0 - r, idx[1]: r}
            if config.noise_sigma > 0:
                x = x * (1.0 + rng.normal(0.0, config.noise_sigma, config.d))
                np.maximum(x, 0.0, out=x)
            examples.append(Example(x, frozenset(idx), ratios, f"r{row_no:02d}-{k:03d}"))
    return Dataset(space, tuple(examples))


def save_config(config: GeneratorConfig, path):
    atomic_write_text(path, config.to_text())


def parse_rows(lines: Sequence[str]) -> Tuple[MixtureSpec, ...]:
    rows = []
    for line in lines:
        comps, count, lo, hi = line.split(":")
        rows.append(MixtureSpec(tuple(comps.split("&")), int(count), (float(lo), float(hi))))
    return tuple(rows)
