"""Two-state Gaussian-observation HMM: k-means initialization, Baum-Welch
training, online forward filtering, and state-to-thought assignment.

The forward recursion is renormalized at every step (scaled alpha); raw
alpha products underflow on long streams, and the argmax over states is
unchanged by the per-step rescaling. Covariances are full matrices kept
positive definite by flooring eigenvalues at ``COV_EPS``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousTrainingError,
    DegenerateInputError,
    NumericalError,
    TraceParseError,
    ValidationError,
)
from .signal_io import MetricSample, metric_matrix

THOUGHT_LABELS = ("Aggregate", "Disperse")

#: Eigenvalue floor applied to every emission covariance.
COV_EPS = 1e-6

#: Stochastic-vector tolerance for model invariants.
PROB_TOL = 1e-9

#: Minimum schedule agreement before an assignment is trusted.
AGREEMENT_FLOOR = 0.6


def _as_matrix(observations) -> np.ndarray:
    if isinstance(observations, np.ndarray):
        obs = observations.astype(float)
    elif len(observations) and isinstance(observations[0], MetricSample):
        obs = metric_matrix(list(observations))
    else:
        obs = np.asarray(observations, dtype=float)
    if obs.ndim != 2:
        raise ValidationError(f"observations must be 2-D, got shape {obs.shape}")
    return obs


def _obs_times(observations) -> np.ndarray | None:
    if len(observations) and isinstance(observations[0], MetricSample):
        return np.array([s.t_ms for s in observations])
    return None


@dataclass
class GaussianHmm:
    """Model parameters: initial distribution, transition matrix, and one
    Gaussian emission (mean + full covariance) per state."""

    pi: np.ndarray
    trans: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    thought_assignment: dict[int, str] | None = None

    @property
    def m(self) -> int:
        return len(self.pi)

    @property
    def l(self) -> int:
        return self.means.shape[1]

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)

    def validate(self) -> None:
        m, l = self.m, self.l
        if self.trans.shape != (m, m):
            raise ValidationError(f"trans shape {self.trans.shape} != ({m},{m})")
        if self.means.shape != (m, l) or self.covs.shape != (m, l, l):
            raise ValidationError("means/covs shape mismatch")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"pi is not a distribution: {self.pi}")
        if np.any(self.trans < 0) or np.any(np.abs(self.trans.sum(1) - 1.0) > PROB_TOL):
            raise ValidationError("trans rows are not distributions")
        for i, cov in enumerate(self.covs):
            if np.max(np.abs(cov - cov.T)) > 1e-9:
                raise ValidationError(f"cov {i} not symmetric")
            if np.linalg.eigvalsh(cov).min() < COV_EPS * (1 - 1e-9):
                raise ValidationError(f"cov {i} below eigenvalue floor")
        if self.thought_assignment is not None:
            if sorted(self.thought_assignment) != list(range(m)) or \
                    sorted(self.thought_assignment.values()) != sorted(THOUGHT_LABELS):
                raise ValidationError(
                    f"thought_assignment not a bijection: {self.thought_assignment}"
                )

    def permuted(self, perm) -> "GaussianHmm":
        """Model with states relabeled by ``perm`` (new index i = old perm[i])."""
        perm = list(perm)
        assignment = None
        if self.thought_assignment is not None:
            assignment = {i: self.thought_assignment[p] for i, p in enumerate(perm)}
        return GaussianHmm(
            pi=self.pi[perm],
            trans=self.trans[np.ix_(perm, perm)],
            means=self.means[perm],
            covs=self.covs[perm],
            thought_assignment=assignment,
        )


@dataclass
class TrainingReport:
    iterations: int = 0
    final_delta: float = float("nan")
    log_likelihoods: list[float] = field(default_factory=list)
    gamma: np.ndarray | None = None
    t_ms: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    agreement: float | None = None
    assignment_note: str | None = None


@dataclass
class ThoughtEstimate:
    t_ms: int
    state: int
    posterior: np.ndarray
    thought: str | None = None
    low_confidence: bool = False


def _log_emissions(model: GaussianHmm, obs: np.ndarray) -> np.ndarray:
    """(T, m) matrix of log Gaussian densities."""
    T = obs.shape[0]
    out = np.empty((T, model.m))
    for i in range(model.m):
        chol = np.linalg.cholesky(model.covs[i])
        diff = obs - model.means[i]
        z = np.linalg.solve(chol, diff.T)
        maha = np.sum(z * z, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, i] = -0.5 * (maha + logdet + model.l * np.log(2.0 * np.pi))
    return out


def _scaled_forward_backward(model: GaussianHmm, obs: np.ndarray):
    """Scaled alpha/beta recursions.

    Per-step emission rows are shifted by their max in log space before
    exponentiation; the shift is absorbed into the scale factors, so gamma,
    zeta, and the log-likelihood are exact.
    """
    T, m = obs.shape[0], model.m
    logb = _log_emissions(model, obs)
    shift = logb.max(axis=1)
    b = np.exp(logb - shift[:, None])

    alpha = np.empty((T, m))
    c = np.empty(T)
    a0 = model.pi * b[0]
    c[0] = a0.sum()
    if c[0] <= 0 or not np.isfinite(c[0]):
        raise NumericalError("forward scale collapsed", iteration=None)
    alpha[0] = a0 / c[0]
    for t in range(1, T):
        at = (alpha[t - 1] @ model.trans) * b[t]
        c[t] = at.sum()
        if c[t] <= 0 or not np.isfinite(c[t]):
            raise NumericalError(f"forward scale collapsed at t={t}")
        alpha[t] = at / c[t]

    beta = np.empty((T, m))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (model.trans @ (b[t + 1] * beta[t + 1])) / c[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    zeta = np.empty((T - 1, m, m))
    for t in range(T - 1):
        z = alpha[t][:, None] * model.trans * (b[t + 1] * beta[t + 1])[None, :]
        zeta[t] = z / c[t + 1]

    loglik = float(np.log(c).sum() + shift.sum())
    return gamma, zeta, loglik


def log_likelihood(model: GaussianHmm, observations) -> float:
    obs = _as_matrix(observations)
    _, _, ll = _scaled_forward_backward(model, obs)
    return ll


# --- k-means ------------------------------------------------------------------


def _lloyd(obs: np.ndarray, m: int, rng: np.random.Generator, max_iter: int):
    n = obs.shape[0]
    centroids = obs[rng.choice(n, size=m, replace=False)].copy()
    # reseed until the starting centroids are distinct
    for _ in range(100):
        if len(np.unique(centroids, axis=0)) == m:
            break
        centroids = obs[rng.choice(n, size=m, replace=False)].copy()
    labels = None
    for _ in range(max_iter):
        d2 = ((obs[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for k in range(m):
            if not np.any(new_labels == k):
                # repopulate an empty cluster with the worst-fit point
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                new_labels[far] = k
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(m):
            centroids[k] = obs[labels == k].mean(axis=0)
    sse = float(((obs - centroids[labels]) ** 2).sum())
    return centroids, labels, sse


def kmeans(observations, m: int, seed: int, n_init: int = 8,
           max_iter: int = 100):
    """Lloyd's algorithm seeded from data points; best SSE over ``n_init``
    restarts wins. Returns (centroids, labels)."""
    obs = _as_matrix(observations)
    if len(np.unique(obs, axis=0)) < m:
        raise DegenerateInputError(
            f"need at least {m} distinct observation vectors"
        )
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centroids, labels, sse = _lloyd(obs, m, rng, max_iter)
        if best is None or sse < best[2]:
            best = (centroids, labels, sse)
    return best[0], best[1]


def kmeans_init(observations, m: int = 2, seed: int = 0,
                n_init: int = 8) -> GaussianHmm:
    """Initial model: k-means centroids as emission means, per-cluster
    empirical covariances (plus the eigenvalue floor), and seeded random
    pi/trans rows drawn uniformly on the simplex."""
    obs = _as_matrix(observations)
    centroids, labels = kmeans(obs, m, seed, n_init=n_init)
    covs = np.empty((m, obs.shape[1], obs.shape[1]))
    for k in range(m):
        pts = obs[labels == k]
        diff = pts - centroids[k]
        covs[k] = diff.T @ diff / len(pts) + COV_EPS * np.eye(obs.shape[1])
        covs[k] = 0.5 * (covs[k] + covs[k].T)
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(m))
    trans = rng.dirichlet(np.ones(m), size=m)
    model = GaussianHmm(pi=pi, trans=trans, means=centroids, covs=covs)
    model.validate()
    return model


# --- Baum-Welch ----------------------------------------------------------------


def _floor_covariance(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    cov = 0.5 * (cov + cov.T)
    min_eig = float(np.linalg.eigvalsh(cov).min())
    if min_eig < COV_EPS:
        cov = cov + (COV_EPS - min_eig) * np.eye(cov.shape[0])
        return cov, True
    return cov, False


def baum_welch(init: GaussianHmm, observations, max_iter: int = 200,
               tol: float = 1e-4) -> tuple[GaussianHmm, TrainingReport]:
    """EM iteration until the max-norm parameter change drops below ``tol``.

    The report carries the per-iteration log-likelihood sequence (non-
    decreasing up to float tolerance) and the gamma trajectory of the
    final model over the training data.
    """
    obs = _as_matrix(observations)
    init.validate()
    if obs.shape[0] < 2 * init.m:
        raise ValidationError(
            f"need at least {2 * init.m} observations, got {obs.shape[0]}"
        )
    if obs.shape[1] != init.l:
        raise ValidationError(
            f"observation dimension {obs.shape[1]} != model dimension {init.l}"
        )

    report = TrainingReport(t_ms=_obs_times(observations))
    model = GaussianHmm(init.pi.copy(), init.trans.copy(),
                        init.means.copy(), init.covs.copy(),
                        thought_assignment=init.thought_assignment)
    T = obs.shape[0]
    for it in range(1, max_iter + 1):
        try:
            gamma, zeta, loglik = _scaled_forward_backward(model, obs)
        except NumericalError as exc:
            raise NumericalError(str(exc), iteration=it) from None
        report.log_likelihoods.append(loglik)

        occupancy = gamma.sum(axis=0)
        new_pi = gamma[0].copy()
        trans_num = zeta.sum(axis=0)
        trans_den = gamma[:-1].sum(axis=0)
        new_trans = trans_num / trans_den[:, None]
        new_trans /= new_trans.sum(axis=1, keepdims=True)
        new_means = (gamma.T @ obs) / occupancy[:, None]
        new_covs = np.empty_like(model.covs)
        for i in range(model.m):
            diff = obs - new_means[i]
            cov = (gamma[:, i][:, None] * diff).T @ diff / occupancy[i]
            cov, floored = _floor_covariance(cov)
            if floored:
                report.warnings.append(
                    f"iteration {it}: covariance {i} floored at eps={COV_EPS}"
                )
            new_covs[i] = cov

        stats = [new_pi, new_trans, new_means, new_covs]
        if any(not np.all(np.isfinite(s)) for s in stats):
            raise NumericalError("NaN/Inf in M-step statistics", iteration=it)

        delta = max(
            np.max(np.abs(new_pi - model.pi)),
            np.max(np.abs(new_trans - model.trans)),
            np.max(np.abs(new_means - model.means)),
            np.max(np.abs(new_covs - model.covs)),
        )
        model = GaussianHmm(new_pi, new_trans, new_means, new_covs,
                            thought_assignment=init.thought_assignment)
        report.iterations = it
        report.final_delta = float(delta)
        if delta < tol:
            break

    gamma, _, loglik = _scaled_forward_backward(model, obs)
    report.log_likelihoods.append(loglik)
    report.gamma = gamma
    model.validate()
    return model, report


# --- state/thought assignment ---------------------------------------------------


def assign_thoughts(report: TrainingReport, schedule) -> dict[int, str]:
    """Pick the state->label bijection whose gamma trajectory best matches
    the training schedule.

    ``schedule`` is a sequence of ((start_ms, end_ms), label) intervals
    covering the training timeline. Agreement for a candidate assignment is
    the mean, over samples, of gamma for the state mapped to the scheduled
    label. Ties break toward the identity assignment (state i ->
    THOUGHT_LABELS[i]); the choice is recorded on the report.
    """
    if report.gamma is None:
        raise ValidationError("report has no gamma trajectory")
    gamma = report.gamma
    T, m = gamma.shape
    t_ms = report.t_ms if report.t_ms is not None else np.arange(T)
    schedule = list(schedule)
    labels_seen = {label for _, label in schedule}
    if labels_seen != set(THOUGHT_LABELS):
        raise ValidationError(
            f"schedule must use both labels {THOUGHT_LABELS}, got {labels_seen}"
        )

    scheduled = np.empty(T, dtype=object)
    for k, t in enumerate(t_ms):
        for (start, end), label in schedule:
            if start <= t < end or (t == end and end == max(e for (_, e), _ in schedule)):
                scheduled[k] = label
                break
        else:
            raise ValidationError(f"schedule does not cover t_ms={t}")

    identity = {i: THOUGHT_LABELS[i] for i in range(m)}
    best: tuple[float, dict[int, str]] | None = None
    for perm in itertools.permutations(range(m)):
        candidate = {perm[i]: THOUGHT_LABELS[i] for i in range(m)}
        state_of = {label: s for s, label in candidate.items()}
        agreement = float(
            np.mean([gamma[k, state_of[scheduled[k]]] for k in range(T)])
        )
        if best is None or agreement > best[0] + 1e-12:
            best = (agreement, candidate)
        elif abs(agreement - best[0]) <= 1e-12 and candidate == identity:
            best = (agreement, candidate)
            report.assignment_note = "tie broken toward identity assignment"

    agreement, assignment = best
    report.agreement = agreement
    if agreement < AGREEMENT_FLOOR:
        raise AmbiguousTrainingError(
            f"schedule agreement {agreement:.3f} below {AGREEMENT_FLOOR}; "
            "retrain with more distinct thoughts"
        )
    return assignment


# --- online estimation -----------------------------------------------------------


def forward_step(model: GaussianHmm, prev_posterior, o_t,
                 t_ms: int | None = None) -> ThoughtEstimate:
    """One normalized forward-filtering update.

    The first call (prev_posterior None) uses pi as the prior. If every
    emission density underflows to zero the update falls back to a uniform
    likelihood and the estimate is flagged low-confidence. Equal posterior
    entries resolve to the lowest state index.
    """
    if isinstance(o_t, MetricSample):
        if t_ms is None:
            t_ms = o_t.t_ms
        o = o_t.vector()
    else:
        o = np.asarray(o_t, dtype=float)
    if prev_posterior is None:
        predicted = model.pi.astype(float)
    else:
        prev = np.asarray(prev_posterior, dtype=float)
        if abs(prev.sum() - 1.0) > 1e-6 or np.any(prev < 0):
            raise ValidationError(f"prev_posterior not normalized: {prev}")
        predicted = prev @ model.trans

    logb = _log_emissions(model, o.reshape(1, -1))[0]
    low_confidence = False
    if np.all(np.isneginf(logb)):
        posterior = predicted / predicted.sum()
        low_confidence = True
    else:
        lik = np.exp(logb - logb.max())
        weighted = predicted * lik
        total = weighted.sum()
        if total <= 0 or not np.isfinite(total):
            posterior = predicted / predicted.sum()
            low_confidence = True
        else:
            posterior = weighted / total

    state = int(np.argmax(posterior))
    thought = None
    if model.thought_assignment is not None:
        thought = model.thought_assignment[state]
    return ThoughtEstimate(t_ms=int(t_ms) if t_ms is not None else 0,
                           state=state, posterior=posterior,
                           thought=thought, low_confidence=low_confidence)


# --- persistence ------------------------------------------------------------------


def save_model(model: GaussianHmm, path) -> None:
    """Write the `#neuroswarm-model v1` text format (full float precision)."""
    model.validate()
    r = repr
    lines = ["#neuroswarm-model v1", f"m {model.m}", f"l {model.l}"]
    lines.append("pi " + " ".join(r(float(x)) for x in model.pi))
    lines.append("trans " + " ".join(r(float(x)) for x in model.trans.ravel()))
    for i in range(model.m):
        lines.append(f"mean {i} " + " ".join(r(float(x)) for x in model.means[i]))
    for i in range(model.m):
        lines.append(f"cov {i} " + " ".join(r(float(x)) for x in model.covs[i].ravel()))
    if model.thought_assignment is not None:
        for i in range(model.m):
            lines.append(f"thought {i} {model.thought_assignment[i]}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path) -> GaussianHmm:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].split() != ["#neuroswarm-model", "v1"]:
        raise TraceParseError("missing '#neuroswarm-model v1' header", line_no=1)
    fields: dict[str, list[str]] = {}
    per_state: dict[tuple[str, int], list[str]] = {}
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            if parts[0] in ("m", "l", "pi", "trans"):
                fields[parts[0]] = parts[1:]
            elif parts[0] in ("mean", "cov", "thought"):
                per_state[(parts[0], int(parts[1]))] = parts[2:]
            else:
                raise ValueError(f"unknown field {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise TraceParseError(str(exc), line_no=no) from None
    try:
        m = int(fields["m"][0])
        l = int(fields["l"][0])
        pi = np.array([float(x) for x in fields["pi"]])
        trans = np.array([float(x) for x in fields["trans"]]).reshape(m, m)
        means = np.array([[float(x) for x in per_state[("mean", i)]]
                          for i in range(m)])
        covs = np.array([[float(x) for x in per_state[("cov", i)]]
                         for i in range(m)]).reshape(m, l, l)
    except (KeyError, ValueError) as exc:
        raise TraceParseError(f"incomplete model file: {exc}") from None
    assignment = None
    if ("thought", 0) in per_state:
        assignment = {i: per_state[("thought", i)][0] for i in range(m)}
    model = GaussianHmm(pi, trans, means, covs, thought_assignment=assignment)
    model.validate()
    return model
