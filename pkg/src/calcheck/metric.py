"""The metric slot: record batches in, test-ready statistics out.

Transforms validation records into the quantities the hypothesis tests
consume: coverage counts over a level grid, PIT samples (raw and folded),
ECDF evaluations, variance bins for conditional checks, and half-plane
probes for particle clouds.

The coverage path for scalar predictions is implemented through the folded
PIT: the outcome lies in the centered level-``lambda`` interval exactly when
the folded PIT value is ``<= lambda``, so the empirical coverage curve and
the folded-PIT ECDF are the same object bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import (
    GaussianPrediction,
    MvGaussianPrediction,
    ParametricPrediction,
    ParticleCloudPrediction,
    PredictionRecord,
    PredictionSetProvider,
    UNIT_NORM_TOL,
    chi2_cdf,
    mahalanobis_sq,
    project_particles,
    scalar_cdf,
    weighted_quantile,
)
from .errors import DataError, UnsupportedMetricError

__all__ = [
    "LevelGrid",
    "PitSample",
    "CoverageCurve",
    "HalfPlaneProbe",
    "VarianceBins",
    "coverage_counts",
    "pit",
    "fold",
    "ecdf_eval",
    "variance_bin",
    "sample_probes",
    "probe_coverage_counts",
    "halfplane_coverage",
    "halfplane_delta",
    "random_direction",
    "default_probe_count",
]


@dataclass(frozen=True, eq=False)
class LevelGrid:
    """Strictly increasing grid of coverage levels in the open unit interval."""

    levels: np.ndarray

    def __post_init__(self):
        lv = np.atleast_1d(np.asarray(self.levels, dtype=float))
        if lv.size == 0:
            raise ValueError("level grid must be nonempty")
        if np.any(lv <= 0.0) or np.any(lv >= 1.0):
            raise ValueError("levels must lie strictly inside (0, 1)")
        if np.any(np.diff(lv) <= 0.0):
            raise ValueError("levels must be strictly increasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def default(cls) -> "LevelGrid":
        """The standard grid {0.05, 0.15, ..., 0.95}."""
        return cls(np.arange(10) / 10.0 + 0.05)

    @property
    def k(self) -> int:
        return self.levels.size


@dataclass(frozen=True, eq=False)
class PitSample:
    """A batch of probability integral transform values in [0, 1].

    ``folded`` records whether the values have been mapped through
    ``v = |2u - 1|``.
    """

    values: np.ndarray
    folded: bool = False

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.size == 0:
            raise DataError("PIT sample must be nonempty")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("PIT values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class CoverageCurve:
    """Empirical coverage counts over a level grid.

    Counts must be monotone in the level (centered sets are nested); this is
    asserted at construction so any non-monotone provider surfaces early.
    """

    levels: LevelGrid
    counts: np.ndarray
    n: int

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.counts, dtype=int))
        if c.shape != (self.levels.k,):
            raise ValueError("one count per grid level required")
        if np.any(c < 0) or np.any(c > self.n):
            raise ValueError("counts must lie in [0, n]")
        if np.any(np.diff(c) < 0):
            raise ValueError("coverage counts must be non-decreasing in the level")
        object.__setattr__(self, "counts", c)

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.n


@dataclass(frozen=True, eq=False)
class HalfPlaneProbe:
    """A frozen (direction, threshold) cut with its nominal coverage level.

    ``null_mean`` is the probability, under the reference cloud the probe was
    drawn from, that a projected draw falls at or below the threshold.
    """

    direction: np.ndarray
    threshold: float
    null_mean: float

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.direction, dtype=float))
        if abs(float(np.linalg.norm(d)) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("probe direction must be a unit vector")
        if not 0.0 <= self.null_mean <= 1.0:
            raise ValueError("null_mean must lie in [0, 1]")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True, eq=False)
class VarianceBins:
    """Partition of a record batch by predicted uncertainty.

    ``assignments[i]`` is the bin index of record ``i``; ``bin_edges`` holds
    the interior uncertainty values where consecutive bins split.
    """

    bin_edges: np.ndarray
    assignments: np.ndarray

    def __post_init__(self):
        edges = np.atleast_1d(np.asarray(self.bin_edges, dtype=float))
        assign = np.atleast_1d(np.asarray(self.assignments, dtype=int))
        if edges.size and np.any(np.diff(edges) < 0):
            raise ValueError("bin edges must be sorted")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "assignments", assign)

    @property
    def n_bins(self) -> int:
        return int(self.assignments.max()) + 1 if self.assignments.size else 0

    def bin_indices(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == b)


# ---------------------------------------------------------------------------
# PIT
# ---------------------------------------------------------------------------

_SCALAR_CDF_FAMILIES = (GaussianPrediction, ParametricPrediction)


def pit(records: list[PredictionRecord]) -> PitSample:
    """Probability integral transform of a record batch.

    Scalar predictions use their own CDF at the outcome; multivariate
    Gaussians reduce through the squared Mahalanobis distance, whose CDF
    under calibration is chi-square with ``d`` degrees of freedom.  Particle
    clouds have no CDF, so their PIT is undefined and raises.
    """
    if not records:
        raise DataError("cannot compute the PIT of an empty record list")
    out = np.empty(len(records))
    for i, rec in enumerate(records):
        pred = rec.prediction
        if isinstance(pred, _SCALAR_CDF_FAMILIES):
            out[i] = scalar_cdf(pred, rec.scalar_outcome)
        elif isinstance(pred, MvGaussianPrediction):
            out[i] = chi2_cdf(mahalanobis_sq(pred, rec.outcome), pred.dim)
        else:
            raise UnsupportedMetricError(
                f"PIT is undefined for {type(pred).__name__}; use the "
                "half-plane coverage path for particle clouds"
            )
    # CDF callables may stray outside [0, 1] by an ulp; clip defensively.
    return PitSample(values=np.clip(out, 0.0, 1.0), folded=False)


def fold(sample: PitSample) -> PitSample:
    """Fold a PIT sample around its midpoint: ``v = |2u - 1|``."""
    if sample.folded:
        raise ValueError("sample is already folded")
    return PitSample(values=np.abs(2.0 * sample.values - 1.0), folded=True)


def ecdf_eval(sample: PitSample, t: float) -> float:
    """Empirical CDF of the sample at ``t`` (weak inequality at ties)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return float(np.mean(sample.values <= t))


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------

def coverage_counts(records: list[PredictionRecord], grid: LevelGrid) -> CoverageCurve:
    """Observed coverage counts of centered prediction sets over a grid.

    For scalar CDF-bearing predictions the count at each level is computed
    through the folded-PIT shortcut (``v_i <= lambda``), which makes the
    coverage curve and the folded-PIT ECDF agree exactly, not merely up to
    rounding.  Multivariate Gaussians count ellipsoid membership through the
    chi-square PIT; set providers are asked directly.
    """
    if not records:
        raise DataError("cannot compute coverage of an empty record list")
    preds = [r.prediction for r in records]
    n = len(records)

    if all(isinstance(p, _SCALAR_CDF_FAMILIES) for p in preds):
        v = fold(pit(records)).values
        counts = np.count_nonzero(v[None, :] <= grid.levels[:, None], axis=1)
    elif all(isinstance(p, MvGaussianPrediction) for p in preds):
        u = pit(records).values
        counts = np.count_nonzero(u[None, :] <= grid.levels[:, None], axis=1)
    elif all(isinstance(p, PredictionSetProvider) for p in preds):
        counts = np.array(
            [
                sum(bool(r.prediction.contains(lam, r.outcome)) for r in records)
                for lam in grid.levels
            ]
        )
    elif any(isinstance(p, ParticleCloudPrediction) for p in preds):
        raise UnsupportedMetricError(
            "particle clouds have no centered interval; use halfplane_coverage"
        )
    else:
        raise DataError("records mix incompatible prediction families")
    return CoverageCurve(levels=grid, counts=counts, n=n)


# ---------------------------------------------------------------------------
# variance binning
# ---------------------------------------------------------------------------

def _uncertainty_scalar(rec: PredictionRecord) -> float:
    pred = rec.prediction
    if isinstance(pred, GaussianPrediction):
        return pred.sigma
    if isinstance(pred, MvGaussianPrediction):
        # log det instead of det: a monotone transform leaves quantile bins
        # unchanged and cannot overflow in high dimension.
        return pred.log_det_cov()
    raise UnsupportedMetricError(
        f"{type(pred).__name__} exposes no scalar uncertainty for binning"
    )


def variance_bin(records: list[PredictionRecord], k_bins: int) -> VarianceBins:
    """Partition records into equal-count bins by predicted uncertainty.

    Bin edges sit at the empirical ``j / k_bins`` quantiles of the
    uncertainty values, so bin sizes differ by at most one.  Ties are broken
    by record order (stable sort), sending edge-straddling ties to the lower
    bin, which keeps reports reproducible.
    """
    if not records:
        raise DataError("cannot bin an empty record list")
    if k_bins < 1:
        raise ValueError("k_bins must be >= 1")
    if k_bins > len(records):
        raise ValueError(f"k_bins={k_bins} exceeds the number of records {len(records)}")
    values = np.array([_uncertainty_scalar(r) for r in records])
    order = np.argsort(values, kind="stable")
    chunks = np.array_split(order, k_bins)
    assignments = np.empty(len(records), dtype=int)
    for b, chunk in enumerate(chunks):
        assignments[chunk] = b
    edges = np.array([values[chunk[0]] for chunk in chunks[1:]])
    return VarianceBins(bin_edges=edges, assignments=assignments)


# ---------------------------------------------------------------------------
# half-plane probes for particle clouds
# ---------------------------------------------------------------------------

def default_probe_count(pred_dim: int, per_dim: int = 10) -> int:
    """Linear-in-dimension probe budget; ``per_dim`` is the tuning knob."""
    return per_dim * pred_dim


def random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random unit direction.

    In one dimension the direction is the constant +1; in two dimensions an
    angle uniform on (0, pi) covers every distinct cut; in higher dimensions
    a normalized standard Gaussian vector is uniform on the sphere.
    """
    if dim == 1:
        return np.ones(1)
    if dim == 2:
        theta = rng.uniform(0.0, np.pi)
        return np.array([np.cos(theta), np.sin(theta)])
    g = rng.standard_normal(dim)
    return g / np.linalg.norm(g)


def sample_probes(
    pred_dim: int,
    count: int,
    grid: LevelGrid,
    rng_seed: int,
    reference: ParticleCloudPrediction,
) -> list[HalfPlaneProbe]:
    """Draw frozen half-plane probes before looking at the data.

    Each probe pairs a fresh direction with a threshold at a weighted
    empirical quantile of the reference cloud projected on that direction;
    the quantile levels cycle through the grid, so each probe's coverage
    indicator has null mean equal to its grid level by construction.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if reference.dim != pred_dim:
        raise ValueError(
            f"reference cloud has dimension {reference.dim}, expected {pred_dim}"
        )
    rng = np.random.default_rng(rng_seed)
    probes = []
    for i in range(count):
        level = float(grid.levels[i % grid.k])
        d = random_direction(pred_dim, rng)
        w, z = project_particles(reference, d)
        threshold = weighted_quantile(w, z, level)
        probes.append(HalfPlaneProbe(direction=d, threshold=threshold, null_mean=level))
    return probes


def probe_coverage_counts(
    records: list[PredictionRecord], probes: list[HalfPlaneProbe]
) -> np.ndarray:
    """Per-probe counts of outcomes at or below the frozen threshold.

    Under the null that outcomes are draws from the reference cloud's law,
    each count is Binomial(n, probe.null_mean).  Only meaningful when the
    record stream is exchangeable with the reference; a drifting cloud needs
    the per-record construction of :func:`halfplane_coverage` instead.
    """
    if not records:
        raise DataError("cannot probe an empty record list")
    outcomes = np.stack([r.outcome for r in records])
    counts = np.empty(len(probes), dtype=int)
    for j, probe in enumerate(probes):
        z = outcomes @ probe.direction
        counts[j] = int(np.count_nonzero(z <= probe.threshold))
    return counts


def halfplane_coverage(
    records: list[PredictionRecord],
    grid: LevelGrid,
    rng: np.random.Generator | int,
) -> CoverageCurve:
    """Coverage curve for particle-cloud records via random projections.

    For each record a fresh direction is drawn independently of the outcome;
    the record's own projected cloud supplies a centered weighted-quantile
    interval at every grid level, and the outcome's projection is tested for
    membership (weak inequalities at the endpoints).  Each indicator is then
    Bernoulli(level) under calibration, so the counts feed the same Binomial
    machinery as ordinary coverage counts.
    """
    if not records:
        raise DataError("cannot compute coverage of an empty record list")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    lo_q = (1.0 - grid.levels) / 2.0
    hi_q = (1.0 + grid.levels) / 2.0
    counts = np.zeros(grid.k, dtype=int)
    for rec in records:
        pred = rec.prediction
        if not isinstance(pred, ParticleCloudPrediction):
            raise UnsupportedMetricError(
                "half-plane coverage requires particle-cloud predictions"
            )
        d = random_direction(pred.dim, rng)
        w, z = project_particles(pred, d)
        order = np.argsort(z, kind="stable")
        z_sorted = z[order]
        cum = np.cumsum(w[order])
        total = cum[-1]
        lo_idx = np.minimum(
            np.searchsorted(cum, lo_q * total, side="left"), z.size - 1
        )
        hi_idx = np.minimum(
            np.searchsorted(cum, hi_q * total, side="left"), z.size - 1
        )
        zy = float(rec.outcome @ d)
        counts += (z_sorted[lo_idx] <= zy) & (zy <= z_sorted[hi_idx])
    return CoverageCurve(levels=grid, counts=counts, n=len(records))


def halfplane_delta(
    probe: HalfPlaneProbe, pred: ParticleCloudPrediction, y
) -> float:
    """Signed half-plane discrepancy between a cloud and one outcome.

    Weighted particle mass strictly above the cut minus the outcome's own
    indicator; lies in [-1, 1] and has expectation 0 under calibration for
    every probe.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape[0] != pred.dim or probe.direction.shape[0] != pred.dim:
        raise ValueError("probe, cloud, and outcome dimensions must agree")
    z_cloud = pred.points @ probe.direction
    mass_above = float(pred.weights[z_cloud > probe.threshold].sum())
    y_above = float(y @ probe.direction > probe.threshold)
    return mass_above - y_above
