"""Synthetic ground truth and attack-profile injection with full labels.

Ground truth is a low-rank ratings matrix with optional Gaussian noise,
observed through a Bernoulli mask.  Attacks come in three flavours: injected
profiles built from classic shilling strategies (random / average /
bandwagon), hijacked existing users whose one negative rating is flipped to
the positive extreme, and plain uniformly-placed cell corruptions for
decomposition experiments.  Every generated dataset carries per-user truth
labels, the attacked cells, and the audit information needed to check the
per-item attacker cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .dataio import RatingMatrix
from .errors import GenerationError, ParameterError
from .matrixops import ObservationMask, as_matrix, svd

PROFILE_STRATEGIES = ("random", "average", "bandwagon")
STRATEGIES = PROFILE_STRATEGIES + ("hijack",)

# Target retries before giving up when the per-item attacker cap keeps biting.
_TARGET_RETRIES = 200


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GroundTruth:
    """True (attack-free, noise-free) ratings with known rank and noise level."""

    matrix: np.ndarray
    rank: int
    sigma: float
    bound: float
    seed: int


@dataclass(frozen=True)
class AttackSpec:
    """Knobs of one attack campaign.

    ``spam_ratio`` is attack profiles over all profiles; ``filler_ratio`` is
    rated items per profile over total items.  ``gamma`` caps attackers per
    item (``None`` means ``max(2, 1% of users)``); ``epsilon`` is the
    malicious-deviation threshold.
    """

    strategy_mix: Mapping[str, float] = field(
        default_factory=lambda: {"random": 1 / 3, "average": 1 / 3, "bandwagon": 1 / 3}
    )
    spam_ratio: float = 0.2
    filler_ratio: float = 0.01
    direction: str = "push"
    profiles_per_attacker: int = 1
    gamma: int | None = None
    epsilon: float = 3.0
    popular_fraction: float = 0.10
    bandwagon_selected: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        weights = dict(self.strategy_mix)
        unknown = set(weights) - set(STRATEGIES)
        if unknown:
            raise ParameterError(f"unknown attack strategies {sorted(unknown)}")
        if any(w < 0 for w in weights.values()):
            raise ParameterError("strategy weights must be nonnegative")
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ParameterError(f"strategy weights must sum to 1, got {total}")
        if not 0.0 < self.spam_ratio < 1.0:
            raise ParameterError(f"spam_ratio must be in (0, 1), got {self.spam_ratio}")
        if not 0.0 < self.filler_ratio < 1.0:
            raise ParameterError(f"filler_ratio must be in (0, 1), got {self.filler_ratio}")
        if self.direction not in ("push", "nuke"):
            raise ParameterError(f"direction must be push or nuke, got {self.direction!r}")
        if self.profiles_per_attacker < 1:
            raise ParameterError("profiles_per_attacker must be >= 1")
        if self.gamma is not None and self.gamma < 1:
            raise ParameterError(f"gamma must be >= 1, got {self.gamma}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.popular_fraction <= 1.0:
            raise ParameterError("popular_fraction must be in (0, 1]")
        if self.bandwagon_selected < 0:
            raise ParameterError("bandwagon_selected must be >= 0")

    def effective_gamma(self, total_users: int) -> int:
        if self.gamma is not None:
            return self.gamma
        return max(2, _round_half_up(0.01 * total_users))


@dataclass
class CleanDataset:
    """Attack-free observed ratings plus the ground truth behind them."""

    ground: GroundTruth
    ratings: RatingMatrix


@dataclass
class AttackedDataset:
    """Observed ratings after an attack campaign, with ground-truth labels.

    ``attack_cells`` holds every maliciously written cell;
    ``subthreshold_cells`` flags the subset whose deviation from the reference
    rating falls short of epsilon (kept as attacks, but they cannot count
    toward the per-item cap in ``verify_unorganized``).  ``item_means`` are
    the pre-attack observed per-item means, the deviation reference for
    injected profile rows which have no ground-truth row of their own.
    """

    ratings: RatingMatrix
    truth_labels: np.ndarray
    ground: GroundTruth
    target_items: list[int]
    attack_cells: list[tuple[int, int]]
    subthreshold_cells: list[tuple[int, int]]
    item_means: np.ndarray
    manifest: list[dict]
    spec: AttackSpec | None = None

    @property
    def normal_users(self) -> int:
        return self.ground.matrix.shape[0]


@dataclass(frozen=True)
class UnorganizedCheck:
    ok: bool
    violations: list[tuple[int, int]]


def generate_ground_truth(
    m: int,
    n: int,
    rank: int,
    *,
    bound: float = 2.0,
    sigma: float = 0.0,
    density: float = 1.0,
    seed: int = 0,
    quality_spread: float = 0.0,
) -> tuple[GroundTruth, ObservationMask]:
    """Draw a rank-``rank`` truth matrix and a Bernoulli observation mask.

    Factors are i.i.d. zero-mean Gaussians scaled so the product entries have
    standard deviation ``bound/2`` before range control; if the drawn product
    pokes outside ``[-bound, bound]`` it is rescaled (rank-preserving) until
    it fits.  ``quality_spread > 0`` turns the first factor pair into an
    item-quality direction so per-item means spread like real rating data
    instead of hugging zero.
    """
    if rank < 1 or rank > min(m, n):
        raise ParameterError(f"rank must be in [1, min(m, n)], got {rank}")
    if not 0.0 < density <= 1.0:
        raise ParameterError(f"density must be in (0, 1], got {density}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if bound <= 0:
        raise ParameterError(f"bound must be > 0, got {bound}")

    rng = np.random.default_rng([seed, 0])
    scale = (bound * bound / (4.0 * rank)) ** 0.25
    left = rng.normal(0.0, scale, size=(m, rank))
    right = rng.normal(0.0, scale, size=(n, rank))
    if quality_spread > 0.0:
        left[:, 0] = 1.0 + 0.25 * rng.standard_normal(m)
        right[:, 0] = quality_spread * rng.standard_normal(n)
    matrix = left @ right.T
    peak = float(np.abs(matrix).max())
    if peak > bound:
        matrix *= bound * (1.0 - 1e-12) / peak

    ground = GroundTruth(matrix=matrix, rank=rank, sigma=float(sigma),
                         bound=float(bound), seed=int(seed))

    mask_rng = np.random.default_rng([seed, 1])
    flags = mask_rng.random((m, n)) < density
    if not flags.any():
        flags[0, 0] = True
    return ground, ObservationMask.from_bool(flags)


def observe(ground: GroundTruth, mask: ObservationMask, *, grid: bool = True) -> np.ndarray:
    """Observed matrix: truth plus Gaussian noise on the mask, zero off it.

    With ``grid`` the values are rounded to the integer rating grid and
    clamped to ``[-bound, bound]``, mirroring a star scale; without it the raw
    noisy values pass through (for decomposition experiments).
    """
    values = ground.matrix
    if ground.sigma > 0:
        noise_rng = np.random.default_rng([ground.seed, 2])
        values = values + noise_rng.normal(0.0, ground.sigma, size=values.shape)
    if grid:
        values = np.clip(np.rint(values), -ground.bound, ground.bound)
    return np.where(mask.array, values, 0.0)


def make_clean_dataset(
    m: int,
    n: int,
    rank: int,
    *,
    bound: float = 2.0,
    sigma: float = 0.0,
    density: float = 1.0,
    seed: int = 0,
    grid: bool = True,
    quality_spread: float = 0.0,
) -> CleanDataset:
    ground, mask = generate_ground_truth(
        m, n, rank, bound=bound, sigma=sigma, density=density, seed=seed,
        quality_spread=quality_spread,
    )
    observed = observe(ground, mask, grid=grid)
    return CleanDataset(
        ground=ground,
        ratings=RatingMatrix.from_dense(observed, mask, bound),
    )


def incoherence_stats(matrix) -> dict[str, float]:
    """Spread statistics of the singular vectors (1 = perfectly incoherent).

    ``mu_row``/``mu_col`` scale the largest row energy of the left/right
    singular factors; ``mu_cross`` scales the largest entry of their outer
    product.  Rank is counted at relative tolerance 1e-8.
    """
    a = as_matrix(matrix)
    factors = svd(a)
    top = float(factors.singular_values[0])
    if top == 0.0:
        raise ParameterError("incoherence statistics are undefined for the zero matrix")
    rank = int(np.count_nonzero(factors.singular_values > 1e-8 * top))
    m, n = a.shape
    left = factors.left[:, :rank]
    right = factors.right[:, :rank]
    mu_row = m * float((left * left).sum(axis=1).max()) / rank
    mu_col = n * float((right * right).sum(axis=1).max()) / rank
    cross = float(np.abs(left @ right.T).max())
    mu_cross = m * n * cross * cross / rank
    return {"mu_row": mu_row, "mu_col": mu_col, "mu_cross": mu_cross}


def numerical_rank(matrix, *, rtol: float = 1e-8) -> int:
    values = svd(matrix).singular_values
    top = float(values[0])
    if top == 0.0:
        return 0
    return int(np.count_nonzero(values > rtol * top))


def _item_statistics(matrix: np.ndarray, flags: np.ndarray):
    counts = flags.sum(axis=0)
    safe = np.maximum(counts, 1)
    sums = np.where(flags, matrix, 0.0).sum(axis=0)
    means = np.where(counts > 0, sums / safe, 0.0)
    sq = np.where(flags, matrix * matrix, 0.0).sum(axis=0)
    variances = np.maximum(np.where(counts > 0, sq / safe, 0.0) - means * means, 0.0)
    return counts, means, np.sqrt(variances)


def _extend_user_ids(user_ids: list, extra: int) -> list:
    if all(isinstance(uid, (int, np.integer)) for uid in user_ids):
        start = max(int(uid) for uid in user_ids) + 1
        return list(user_ids) + [start + i for i in range(extra)]
    return list(user_ids) + [f"attacker-{i}" for i in range(extra)]


def _grid_clip(values: np.ndarray, bound: float) -> np.ndarray:
    return np.clip(np.rint(values), -bound, bound)


def inject_profile_attacks(dataset: CleanDataset, spec: AttackSpec) -> AttackedDataset:
    """Append shilling-style attack rows per the spec's strategy mix.

    One target per attacker, filler items drawn from the popular pool,
    bandwagon profiles additionally rating a handful of popular items at the
    top of the scale.  The per-item attacker cap is enforced while assigning
    targets (bounded retries per profile).
    """
    base = dataset.ratings
    matrix = base.matrix
    flags = base.mask.array
    m_norm, n = matrix.shape
    bound = base.bound

    counts, item_mean, item_std = _item_statistics(matrix, flags)
    observed_values = matrix[flags]
    global_mean = float(observed_values.mean())
    global_std = float(observed_values.std())

    a = _round_half_up(spec.spam_ratio / (1.0 - spec.spam_ratio) * m_norm)
    gamma = spec.effective_gamma(m_norm + a)

    names = [s for s in PROFILE_STRATEGIES if spec.strategy_mix.get(s, 0.0) > 0]
    weights = np.array([spec.strategy_mix[s] for s in names], dtype=float)
    if a > 0 and not names:
        raise GenerationError("strategy mix assigns no weight to profile strategies")
    if names:
        weights = weights / weights.sum()

    if spec.direction == "push":
        eligible = np.flatnonzero((counts > 0) & (item_mean < 0))
    else:
        eligible = np.flatnonzero((counts > 0) & (item_mean > 0))
    if a > 0 and eligible.size == 0:
        raise GenerationError(
            f"no eligible target items for a {spec.direction} attack"
        )

    filler_count = _round_half_up(spec.filler_ratio * n)
    ranking = np.lexsort((np.arange(n), -counts))
    pool_size = min(n, max(int(math.ceil(spec.popular_fraction * n)),
                           filler_count + spec.bandwagon_selected + 1))
    pool = ranking[:pool_size]

    rng = np.random.default_rng([spec.seed, 10])
    new_rows = np.zeros((a, n))
    new_flags = np.zeros((a, n), dtype=bool)
    target_value = bound if spec.direction == "push" else -bound
    target_load: dict[int, int] = {}
    attack_cells: list[tuple[int, int]] = []
    subthreshold: list[tuple[int, int]] = []
    manifest: list[dict] = []
    target_items: set[int] = set()

    ppa = spec.profiles_per_attacker
    strategy = None
    target = None
    for i in range(a):
        if i % ppa == 0:
            strategy = str(rng.choice(names, p=weights))
            remaining = min(ppa, a - i)
            target = None
            for _ in range(_TARGET_RETRIES):
                candidate = int(eligible[rng.integers(eligible.size)])
                if target_load.get(candidate, 0) + remaining <= gamma - 1:
                    target = candidate
                    break
            if target is None:
                raise GenerationError(
                    f"could not place a target under the per-item cap gamma={gamma}"
                )
        target_load[target] = target_load.get(target, 0) + 1
        target_items.add(target)

        selected: list[int] = []
        if strategy == "bandwagon" and spec.bandwagon_selected > 0:
            candidates = pool[pool != target]
            take = min(spec.bandwagon_selected, candidates.size)
            selected = [int(j) for j in rng.choice(candidates, size=take, replace=False)]

        blocked = {target, *selected}
        available = np.array([j for j in pool if j not in blocked], dtype=int)
        if available.size < filler_count:
            extra = [int(j) for j in ranking if j not in blocked and j not in set(available)]
            available = np.array(list(available) + extra, dtype=int)
        if available.size < filler_count:
            raise GenerationError(
                f"cannot pick {filler_count} filler items among {n} items"
            )
        fillers = [int(j) for j in rng.choice(available, size=filler_count, replace=False)]

        if strategy == "average":
            filler_values = rng.normal(item_mean[fillers], item_std[fillers])
        else:  # random fillers; bandwagon uses the same filler rule
            filler_values = rng.normal(global_mean, global_std, size=filler_count)
        filler_values = _grid_clip(filler_values, bound)

        row = m_norm + i
        new_rows[i, fillers] = filler_values
        new_flags[i, fillers] = True
        if selected:
            new_rows[i, selected] = bound
            new_flags[i, selected] = True
        new_rows[i, target] = target_value
        new_flags[i, target] = True

        attack_cells.append((row, target))
        deviation = float(abs(target_value - item_mean[target]))
        if deviation < spec.epsilon:
            subthreshold.append((row, target))
        manifest.append(
            {
                "row": row,
                "strategy": strategy,
                "target": int(target),
                "selected": selected,
                "fillers": fillers,
                "subthreshold": bool(deviation < spec.epsilon),
            }
        )

    stacked = np.vstack([matrix, new_rows]) if a else matrix.copy()
    stacked_flags = np.vstack([flags, new_flags]) if a else flags.copy()
    labels = np.concatenate([np.zeros(m_norm, dtype=bool), np.ones(a, dtype=bool)])

    attacked = AttackedDataset(
        ratings=RatingMatrix(
            matrix=stacked,
            mask=ObservationMask.from_bool(stacked_flags),
            user_ids=_extend_user_ids(base.user_ids, a),
            item_ids=list(base.item_ids),
            bound=bound,
        ),
        truth_labels=labels,
        ground=dataset.ground,
        target_items=sorted(target_items),
        attack_cells=attack_cells,
        subthreshold_cells=subthreshold,
        item_means=item_mean,
        manifest=manifest,
        spec=spec,
    )
    _check_gamma_cap(attacked, gamma)
    return attacked


def _as_attacked(dataset: CleanDataset | AttackedDataset) -> AttackedDataset:
    if isinstance(dataset, AttackedDataset):
        return dataset
    flags = dataset.ratings.mask.array
    _, item_mean, _ = _item_statistics(dataset.ratings.matrix, flags)
    m = dataset.ratings.matrix.shape[0]
    return AttackedDataset(
        ratings=dataset.ratings,
        truth_labels=np.zeros(m, dtype=bool),
        ground=dataset.ground,
        target_items=[],
        attack_cells=[],
        subthreshold_cells=[],
        item_means=item_mean,
        manifest=[],
        spec=None,
    )


def hijack_existing_users(
    dataset: CleanDataset | AttackedDataset, count: int, seed: int = 0
) -> AttackedDataset:
    """Flip one negative rating of ``count`` existing normal users to +bound.

    The touched users are relabeled as attackers.  Deviations below epsilon
    are still recorded as attacks (flipping -0.5 to +2 is malicious even if
    it clears the threshold by less than epsilon) but flagged subthreshold.
    """
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    base = _as_attacked(dataset)
    if count == 0:
        return base

    matrix = base.ratings.matrix.copy()
    flags = base.ratings.mask.array
    bound = base.ratings.bound
    epsilon = base.spec.epsilon if base.spec is not None else 3.0

    negatives = flags & (matrix < 0)
    eligible = np.flatnonzero(~base.truth_labels & negatives.any(axis=1))
    if count > eligible.size:
        raise GenerationError(
            f"only {eligible.size} normal users have a negative rating, need {count}"
        )

    gamma = base.spec.effective_gamma(matrix.shape[0]) if base.spec is not None else None
    per_item: dict[int, int] = {}
    for _, col in base.attack_cells:
        per_item[col] = per_item.get(col, 0) + 1

    rng = np.random.default_rng([seed, 20])
    order = rng.permutation(eligible)

    labels = base.truth_labels.copy()
    attack_cells = list(base.attack_cells)
    subthreshold = list(base.subthreshold_cells)
    manifest = list(base.manifest)
    targets = set(base.target_items)

    hijacked = 0
    chosen: list[tuple[int, int]] = []
    for user in (int(u) for u in order):
        if hijacked == count:
            break
        cols = np.flatnonzero(negatives[user])
        if gamma is not None:
            # keep the per-item attacker cap intact while picking the item
            cols = np.array([c for c in cols if per_item.get(int(c), 0) + 1 <= gamma - 1],
                            dtype=int)
            if cols.size == 0:
                continue
        target = int(cols[rng.integers(cols.size)])
        per_item[target] = per_item.get(target, 0) + 1
        chosen.append((user, target))
        hijacked += 1
    if hijacked < count:
        raise GenerationError(
            f"could only hijack {hijacked} of {count} users under the per-item cap"
        )

    for user, target in chosen:
        matrix[user, target] = bound
        labels[user] = True
        attack_cells.append((user, target))
        targets.add(target)
        deviation = float(abs(bound - base.ground.matrix[user, target]))
        if deviation < epsilon:
            subthreshold.append((user, target))
        manifest.append(
            {
                "row": user,
                "strategy": "hijack",
                "target": target,
                "selected": [],
                "fillers": [],
                "subthreshold": bool(deviation < epsilon),
            }
        )

    attacked = AttackedDataset(
        ratings=RatingMatrix(
            matrix=matrix,
            mask=base.ratings.mask,
            user_ids=list(base.ratings.user_ids),
            item_ids=list(base.ratings.item_ids),
            bound=bound,
        ),
        truth_labels=labels,
        ground=base.ground,
        target_items=sorted(targets),
        attack_cells=attack_cells,
        subthreshold_cells=subthreshold,
        item_means=base.item_means,
        manifest=manifest,
        spec=base.spec,
    )
    if base.spec is not None:
        _check_gamma_cap(attacked, base.spec.effective_gamma(matrix.shape[0]))
    return attacked


def _check_gamma_cap(attacked: AttackedDataset, gamma: int) -> None:
    per_item: dict[int, int] = {}
    for _, col in attacked.attack_cells:
        per_item[col] = per_item.get(col, 0) + 1
    worst = max(per_item.values(), default=0)
    if worst >= gamma:
        raise GenerationError(
            f"an item collected {worst} attackers, cap is gamma={gamma}"
        )


def corrupt_cells(
    matrix,
    mask: ObservationMask,
    fraction: float,
    magnitude: float,
    seed: int = 0,
    *,
    magnitude_high: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Add +-magnitude spikes to a uniform fraction of observed cells.

    Returns the corrupted matrix and the boolean spike support.  Used by the
    decomposition experiments where attacks are additive cell corruptions
    rather than whole profiles.
    """
    matrix = as_matrix(matrix)
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must be in [0, 1], got {fraction}")
    if magnitude < 0:
        raise ParameterError(f"magnitude must be >= 0, got {magnitude}")
    observed = np.argwhere(mask.array)
    k = _round_half_up(fraction * observed.shape[0])
    out = matrix.copy()
    spikes = np.zeros(matrix.shape, dtype=bool)
    if k == 0:
        return out, spikes
    rng = np.random.default_rng([seed, 30])
    picked = observed[rng.choice(observed.shape[0], size=k, replace=False)]
    signs = rng.choice(np.array([-1.0, 1.0]), size=k)
    if magnitude_high is None:
        magnitudes = np.full(k, magnitude)
    else:
        magnitudes = rng.uniform(magnitude, magnitude_high, size=k)
    rows, cols = picked[:, 0], picked[:, 1]
    out[rows, cols] += signs * magnitudes
    spikes[rows, cols] = True
    return out, spikes


def verify_unorganized(attacked: AttackedDataset, spec: AttackSpec) -> UnorganizedCheck:
    """Check the per-item cap: fewer than gamma users deviate >= epsilon.

    Deviations are measured against the ground truth for original users and
    against the pre-attack item means for appended profile rows, on observed
    cells only.
    """
    matrix = attacked.ratings.matrix
    flags = attacked.ratings.mask.array
    m_total, n = matrix.shape
    m_norm = attacked.normal_users

    reference = np.empty_like(matrix)
    reference[:m_norm] = attacked.ground.matrix
    if m_total > m_norm:
        reference[m_norm:] = np.tile(attacked.item_means, (m_total - m_norm, 1))

    hits = flags & (np.abs(matrix - reference) >= spec.epsilon)
    per_item = hits.sum(axis=0)
    gamma = spec.effective_gamma(m_total)
    violations = [(int(j), int(per_item[j])) for j in np.flatnonzero(per_item >= gamma)]
    return UnorganizedCheck(ok=not violations, violations=violations)


def attack_manifest(attacked: AttackedDataset) -> dict:
    """JSON-ready audit document: per-attacker strategy, target, fillers, cells."""
    item_ids = attacked.ratings.item_ids
    user_ids = attacked.ratings.user_ids
    attackers = []
    for entry in attacked.manifest:
        attackers.append(
            {
                "user": user_ids[entry["row"]],
                "strategy": entry["strategy"],
                "target": item_ids[entry["target"]],
                "selected_items": [item_ids[j] for j in entry["selected"]],
                "filler_items": [item_ids[j] for j in entry["fillers"]],
                "subthreshold": entry["subthreshold"],
            }
        )
    doc = {
        "normal_users": int(attacked.normal_users),
        "total_users": int(attacked.ratings.matrix.shape[0]),
        "attackers": attackers,
        "target_items": [item_ids[j] for j in attacked.target_items],
        "attack_cells": [[int(r), int(c)] for r, c in attacked.attack_cells],
        "subthreshold_cells": [[int(r), int(c)] for r, c in attacked.subthreshold_cells],
    }
    if attacked.spec is not None:
        spec_dict = {
            "strategy_mix": dict(attacked.spec.strategy_mix),
            "spam_ratio": attacked.spec.spam_ratio,
            "filler_ratio": attacked.spec.filler_ratio,
            "direction": attacked.spec.direction,
            "profiles_per_attacker": attacked.spec.profiles_per_attacker,
            "gamma": attacked.spec.effective_gamma(attacked.ratings.matrix.shape[0]),
            "epsilon": attacked.spec.epsilon,
            "popular_fraction": attacked.spec.popular_fraction,
            "bandwagon_selected": attacked.spec.bandwagon_selected,
            "seed": attacked.spec.seed,
        }
        doc["attack_spec"] = spec_dict
    return doc


def mixed_attack(
    dataset: CleanDataset,
    spec: AttackSpec,
    hijack_share: float = 0.75,
    seed: int | None = None,
) -> AttackedDataset:
    """Composite campaign: a share of hijacked existing users, the rest
    injected profiles, at an overall spam ratio.

    With ``s`` the hijack share and ``rho`` the spam ratio, the attack total
    solves ``total = rho * (m + injected)`` so that the published ratio holds
    after the injected rows join the user base.
    """
    if not 0.0 <= hijack_share < 1.0:
        raise ParameterError(f"hijack_share must be in [0, 1), got {hijack_share}")
    m_norm = dataset.ratings.matrix.shape[0]
    rho = spec.spam_ratio
    injected_share = 1.0 - hijack_share
    total = rho * m_norm / (1.0 - injected_share * rho)
    injected = _round_half_up(injected_share * total)
    hijacked = _round_half_up(hijack_share * total)

    if injected > 0:
        inj_ratio = injected / (m_norm + injected)
        attacked = inject_profile_attacks(
            dataset, replace(spec, spam_ratio=min(max(inj_ratio, 1e-9), 1 - 1e-9))
        )
    else:
        attacked = _as_attacked(dataset)
        attacked.spec = spec
    return hijack_existing_users(attacked, hijacked, seed=spec.seed if seed is None else seed)
