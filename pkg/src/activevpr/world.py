"""Synthetic 1-D trajectory worlds with domain shift.

A world is a chain of viewpoint cells at 1 m spacing, partitioned into
contiguous place blocks. Each viewpoint carries a "featureless" degree
that flattens the simulated classifier output toward uniform, and each
evaluation domain applies multiplicative noise whose strength is its
single shift parameter.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .pdv import normalize, uniform

CONFUSION_ROW_TOL = 1e-9


class WorldConfigError(ValueError):
    """Invalid world configuration or malformed world file."""


@dataclass(frozen=True)
class Domain:
    """One evaluation session; shift_strength 0 is the training domain."""

    id: str
    shift_strength: float = 0.0
    seed: int = 0
    confusion_blend: float = 0.0  # optional extra blend of the confusion row toward uniform

    def __post_init__(self):
        if self.shift_strength < 0:
            raise WorldConfigError("shift_strength must be >= 0")
        if not 0.0 <= self.confusion_blend <= 1.0:
            raise WorldConfigError("confusion_blend must be in [0, 1]")


TRAIN_DOMAIN = Domain(id="train", shift_strength=0.0, seed=0)


@dataclass(frozen=True)
class WorldConfig:
    n_viewpoints: int = 400
    place_len_m: int = 25
    confusion_diag: float = 0.85
    confusion_twin: float = 0.0
    featureless_fraction: float = 0.3
    featureless_run_min_m: int = 40
    featureless_run_max_m: int = 80
    featureless_degree: float = 1.0
    featureless_descriptor_degree: float = 1.0
    descriptor_noise_sigma: float = 0.05
    descriptor_shift_scale: float = 1.0
    descriptor_shift_jitter: float = 0.0
    base_observation_shift: float = 0.0
    appearance_group: int = 1

    def __post_init__(self):
        if self.n_viewpoints <= 0:
            raise WorldConfigError("n_viewpoints must be positive")
        if self.place_len_m <= 0:
            raise WorldConfigError("place_len_m must be >= 1")
        if not 0.0 < self.confusion_diag <= 1.0:
            raise WorldConfigError("confusion_diag must be in (0, 1]")
        if not 0.0 <= self.confusion_twin <= self.confusion_diag:
            raise WorldConfigError(
                "confusion_twin must be in [0, confusion_diag]")
        if self.confusion_diag + self.confusion_twin > 1.0:
            raise WorldConfigError("confusion_diag + confusion_twin must be <= 1")
        if not 0.0 <= self.featureless_fraction < 1.0:
            raise WorldConfigError("featureless_fraction must be in [0, 1)")
        if not 0.0 <= self.featureless_degree <= 1.0:
            raise WorldConfigError("featureless_degree must be in [0, 1]")
        if self.featureless_run_min_m > self.featureless_run_max_m:
            raise WorldConfigError("featureless run bounds out of order")
        if self.base_observation_shift < 0:
            raise WorldConfigError("base_observation_shift must be >= 0")
        if self.appearance_group < 1:
            raise WorldConfigError("appearance_group must be >= 1")
        if self.descriptor_shift_jitter < 0:
            raise WorldConfigError("descriptor_shift_jitter must be >= 0")


# Paper-scale geometry: 100 m place blocks on a long route.
PAPER_GEOMETRY = WorldConfig(n_viewpoints=6300, place_len_m=100)


@dataclass(frozen=True)
class TrajectoryWorld:
    n_viewpoints: int
    place_len_m: int
    confusion: np.ndarray          # |C| x |C| row-stochastic
    featureless: np.ndarray        # per-viewpoint degree in [0, 1]
    domains: tuple[Domain, ...] = (TRAIN_DOMAIN,)
    descriptor_noise_sigma: float = 0.05
    descriptor_shift_scale: float = 1.0
    descriptor_shift_jitter: float = 0.0
    base_observation_shift: float = 0.0
    appearance_of: np.ndarray | None = None  # per-place appearance class

    def __post_init__(self):
        confusion = np.asarray(self.confusion, dtype=np.float64)
        featureless = np.asarray(self.featureless, dtype=np.float64)
        object.__setattr__(self, "confusion", confusion)
        object.__setattr__(self, "featureless", featureless)
        n, c = self.n_viewpoints, confusion.shape[0]
        if n <= 0:
            raise WorldConfigError("n_viewpoints must be positive")
        expected_c = -(-n // self.place_len_m)  # ceil division
        if confusion.shape != (expected_c, expected_c):
            raise WorldConfigError(
                f"confusion must be {expected_c}x{expected_c} for "
                f"{n} viewpoints at {self.place_len_m} m blocks, got {confusion.shape}"
            )
        if np.any(confusion < 0):
            raise WorldConfigError("confusion entries must be nonnegative")
        rowsums = confusion.sum(axis=1)
        bad = np.nonzero(np.abs(rowsums - 1.0) > CONFUSION_ROW_TOL)[0]
        if bad.size:
            raise WorldConfigError(
                f"confusion row {bad[0]} sums to {rowsums[bad[0]]:.12g}, expected 1"
            )
        if featureless.shape != (n,):
            raise WorldConfigError(f"featureless must have length {n}")
        if np.any(featureless < 0) or np.any(featureless > 1):
            raise WorldConfigError("featureless degrees must be in [0, 1]")
        place_of = np.arange(n) // self.place_len_m
        object.__setattr__(self, "place_of", place_of)
        object.__setattr__(self, "place_counts", np.bincount(place_of, minlength=c))
        if self.appearance_of is None:
            appearance = np.arange(c)
        else:
            appearance = np.asarray(self.appearance_of, dtype=np.int64)
            if appearance.shape != (c,):
                raise WorldConfigError(f"appearance_of must have length {c}")
            if np.any(appearance < 0) or np.any(appearance >= c):
                raise WorldConfigError("appearance_of entries must be place ids")
        object.__setattr__(self, "appearance_of", appearance)

    @property
    def n_places(self) -> int:
        return self.confusion.shape[0]

    @property
    def descriptor_dim(self) -> int:
        # one-hot place block, featureless degree, noise channel
        return self.n_places + 2

    def domain(self, domain_id: str) -> Domain:
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise KeyError(f"unknown domain {domain_id!r}")

    def __eq__(self, other):
        if not isinstance(other, TrajectoryWorld):
            return NotImplemented
        return (
            self.n_viewpoints == other.n_viewpoints
            and self.place_len_m == other.place_len_m
            and np.array_equal(self.confusion, other.confusion)
            and np.array_equal(self.featureless, other.featureless)
            and self.domains == other.domains
            and self.descriptor_noise_sigma == other.descriptor_noise_sigma
            and self.descriptor_shift_scale == other.descriptor_shift_scale
            and self.descriptor_shift_jitter == other.descriptor_shift_jitter
            and self.base_observation_shift == other.base_observation_shift
            and np.array_equal(self.appearance_of, other.appearance_of)
        )


def twin_of(i: int, n_places: int) -> int | None:
    """Twin partner of class i: the class half the route away, or None.

    Classes pair up across an offset of half the (even part of the) class
    count, so twin hypotheses are spatially distant and only resolvable by
    observing the distinct neighborhoods ahead of them. With an odd class
    count the last class is unpaired.
    """
    paired = n_places - (n_places % 2)
    if i >= paired or paired < 2:
        return None
    half = paired // 2
    return i + half if i < half else i - half


def _spread_confusion(n_places: int, diag: float, twin: float = 0.0) -> np.ndarray:
    """Row-stochastic matrix: `diag` on the diagonal, `twin` mass on the twin
    partner class, the remainder spread uniformly over the other classes."""
    if n_places == 1:
        return np.ones((1, 1))
    m = np.zeros((n_places, n_places))
    for i in range(n_places):
        j = twin_of(i, n_places) if twin > 0 else None
        d = diag if j is not None else diag + twin
        rest = n_places - 1 - (j is not None)
        if rest:
            m[i] = (1.0 - d - (twin if j is not None else 0.0)) / rest
        m[i, i] = d
        if j is not None:
            m[i, j] = twin
        m[i, i] += 1.0 - m[i].sum()  # absorb any leftover (rest == 0 case)
    return m


def _place_featureless_runs(cfg: WorldConfig, rng: np.random.Generator) -> np.ndarray:
    """Mark contiguous featureless runs until the target fraction is covered."""
    f = np.zeros(cfg.n_viewpoints)
    target = int(round(cfg.featureless_fraction * cfg.n_viewpoints))
    covered = 0
    attempts = 0
    while covered < target and attempts < 10_000:
        attempts += 1
        run = int(rng.integers(cfg.featureless_run_min_m, cfg.featureless_run_max_m + 1))
        run = min(run, target - covered) if target - covered < cfg.featureless_run_min_m else run
        start = int(rng.integers(0, max(1, cfg.n_viewpoints - run)))
        # keep runs disjoint with a 1-cell buffer so run boundaries stay visible
        lo, hi = max(0, start - 1), min(cfg.n_viewpoints, start + run + 1)
        if f[lo:hi].any():
            continue
        f[start : start + run] = cfg.featureless_degree
        covered += run
    return f


def generate_world(
    cfg: WorldConfig,
    seed: int,
    domains: tuple[Domain, ...] | list[Domain] | None = None,
) -> TrajectoryWorld:
    """Deterministically build a world from (config, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([0x57F4, seed]))
    n_places = -(-cfg.n_viewpoints // cfg.place_len_m)
    confusion = _spread_confusion(n_places, cfg.confusion_diag, cfg.confusion_twin)
    featureless = _place_featureless_runs(cfg, rng)
    # aliased places look alike: the scene descriptor cannot tell members
    # of a group apart, only the belief's trajectory consistency can
    appearance = None
    if cfg.appearance_group > 1:
        # groups of `appearance_group` places spaced far apart along the route
        n_classes = -(-n_places // cfg.appearance_group)
        appearance = np.arange(n_places) % n_classes
    elif cfg.confusion_twin > 0:
        twins = [twin_of(i, n_places) for i in range(n_places)]
        appearance = np.array(
            [min(i, t) if t is not None else i for i, t in enumerate(twins)]
        )
    return TrajectoryWorld(
        n_viewpoints=cfg.n_viewpoints,
        place_len_m=cfg.place_len_m,
        confusion=confusion,
        featureless=featureless,
        domains=tuple(domains) if domains else (TRAIN_DOMAIN,),
        descriptor_noise_sigma=cfg.descriptor_noise_sigma,
        descriptor_shift_scale=cfg.descriptor_shift_scale,
        descriptor_shift_jitter=cfg.descriptor_shift_jitter,
        base_observation_shift=cfg.base_observation_shift,
        appearance_of=appearance,
    )


def expected_observation(world: TrajectoryWorld, v: int, d: Domain) -> np.ndarray:
    """Noise-free classifier PDV at viewpoint v in domain d."""
    if not 0 <= v < world.n_viewpoints:
        raise IndexError(f"viewpoint {v} out of range [0, {world.n_viewpoints})")
    c = world.n_places
    row = world.confusion[world.place_of[v]]
    if d.confusion_blend > 0:
        row = (1.0 - d.confusion_blend) * row + d.confusion_blend * uniform(c)
    f = world.featureless[v]
    return (1.0 - f) * row + f * uniform(c)


def observe(
    world: TrajectoryWorld, v: int, d: Domain, rng: np.random.Generator
) -> np.ndarray:
    """Simulated classifier PDV: expected PDV under multiplicative shift noise.

    Noise is per-entry Gamma whose concentration is the inverse of the
    effective shift (the world's intrinsic observation noise plus the
    domain's shift strength); with both at zero the expected PDV is exact.
    """
    base = expected_observation(world, v, d)
    s = world.base_observation_shift + d.shift_strength
    if s == 0:
        return base
    noise = rng.gamma(1.0 / s, 1.0, size=base.size)
    return normalize(base * noise)


FEATURELESS_PROTOTYPE_CHANNEL = -2  # descriptor[-2] carries the featureless degree


def descriptor(
    world: TrajectoryWorld, v: int, d: Domain, rng: np.random.Generator
) -> np.ndarray:
    """Scene descriptor: appearance one-hot scaled by (1-f), f, and a noise
    channel. Places sharing an appearance class (twins) get identical
    descriptors.

    Gaussian noise with sigma = sigma0 * (1 + scale * (shift + jitter)) is
    added to every channel, where jitter is a per-call uniform draw from
    [0, descriptor_shift_jitter] simulating variable capture quality in
    every domain; with sigma0 = 0 and shift 0 the descriptor is exact.
    """
    if not 0 <= v < world.n_viewpoints:
        raise IndexError(f"viewpoint {v} out of range [0, {world.n_viewpoints})")
    c = world.n_places
    f = world.featureless[v]
    desc = np.zeros(c + 2)
    desc[world.appearance_of[world.place_of[v]]] = 1.0 - f
    desc[-2] = f
    eff_shift = d.shift_strength
    if world.descriptor_shift_jitter > 0:
        eff_shift += rng.uniform(0.0, world.descriptor_shift_jitter)
    sigma = world.descriptor_noise_sigma * (
        1.0 + world.descriptor_shift_scale * eff_shift
    )
    if sigma > 0:
        desc = desc + rng.normal(0.0, sigma, size=desc.size)
    return desc


def featureless_prototype(world: TrajectoryWorld) -> np.ndarray:
    """Descriptor of a fully featureless viewpoint with zero noise."""
    proto = np.zeros(world.descriptor_dim)
    proto[-2] = 1.0
    return proto


# ---------------------------------------------------------------------------
# World file format (JSON)
# ---------------------------------------------------------------------------

def world_to_dict(world: TrajectoryWorld) -> dict:
    return {
        "n_viewpoints": world.n_viewpoints,
        "place_len_m": world.place_len_m,
        "confusion": world.confusion.tolist(),
        "featureless": world.featureless.tolist(),
        "descriptor_noise_sigma": world.descriptor_noise_sigma,
        "descriptor_shift_scale": world.descriptor_shift_scale,
        "descriptor_shift_jitter": world.descriptor_shift_jitter,
        "base_observation_shift": world.base_observation_shift,
        "appearance_of": world.appearance_of.tolist(),
        "domains": [
            {
                "id": d.id,
                "shift_strength": d.shift_strength,
                "seed": d.seed,
                "confusion_blend": d.confusion_blend,
            }
            for d in world.domains
        ],
    }


def save_world(world: TrajectoryWorld, path) -> None:
    with open(path, "w") as fh:
        json.dump(world_to_dict(world), fh, indent=1, sort_keys=True)
        fh.write("\n")


def world_from_dict(data: dict) -> TrajectoryWorld:
    try:
        domains = tuple(
            Domain(
                id=str(d["id"]),
                shift_strength=float(d.get("shift_strength", 0.0)),
                seed=int(d.get("seed", 0)),
                confusion_blend=float(d.get("confusion_blend", 0.0)),
            )
            for d in data.get("domains", [{"id": "train"}])
        )
        return TrajectoryWorld(
            n_viewpoints=int(data["n_viewpoints"]),
            place_len_m=int(data["place_len_m"]),
            confusion=np.asarray(data["confusion"], dtype=np.float64),
            featureless=np.asarray(data["featureless"], dtype=np.float64),
            domains=domains,
            descriptor_noise_sigma=float(data.get("descriptor_noise_sigma", 0.05)),
            descriptor_shift_scale=float(data.get("descriptor_shift_scale", 1.0)),
            descriptor_shift_jitter=float(data.get("descriptor_shift_jitter", 0.0)),
            base_observation_shift=float(data.get("base_observation_shift", 0.0)),
            appearance_of=(
                np.asarray(data["appearance_of"], dtype=np.int64)
                if "appearance_of" in data else None
            ),
        )
    except KeyError as exc:
        raise WorldConfigError(f"world file missing field {exc}") from exc


def load_world(path) -> TrajectoryWorld:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WorldConfigError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    return world_from_dict(data)


# ---------------------------------------------------------------------------
# External PDV ingestion (CSV)
# ---------------------------------------------------------------------------

def load_pdv_table(path, prefix: str) -> dict[tuple[int, str], np.ndarray]:
    """Read externally computed per-viewpoint PDVs.

    Columns: viewpoint, domain, optional timestamp, then prefix_0..prefix_{k-1}
    (prefix "p" for place PDVs, "a" for action PDVs). Duplicate
    (viewpoint, domain) records keep the one with the youngest timestamp.
    """
    table: dict[tuple[int, str], tuple[float, np.ndarray]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise WorldConfigError(f"{path}: empty CSV")
        value_cols = sorted(
            (c for c in reader.fieldnames if c.startswith(prefix + "_")),
            key=lambda c: int(c.split("_", 1)[1]),
        )
        if not value_cols:
            raise WorldConfigError(f"{path}: no {prefix}_* columns found")
        for i, row in enumerate(reader, start=2):
            try:
                key = (int(row["viewpoint"]), row.get("domain", "train"))
                ts = float(row.get("timestamp", 0.0) or 0.0)
                vec = np.array([float(row[c]) for c in value_cols])
            except (KeyError, TypeError, ValueError) as exc:
                raise WorldConfigError(f"{path}: line {i}: bad record ({exc})") from exc
            if np.any(vec < 0) or not np.isclose(vec.sum(), 1.0, atol=1e-6):
                raise WorldConfigError(
                    f"{path}: line {i}: values are not a probability vector"
                )
            old = table.get(key)
            if old is None or ts >= old[0]:
                table[key] = (ts, normalize(vec))
    return {k: v for k, (_, v) in table.items()}
