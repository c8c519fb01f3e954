"""After-study analysis: action-centred weighted least squares, sandwich covariance, chi-square test.

With X = [B; (A - pi) Z] and weights w = 1 / (pi (1 - pi)),

    theta_hat = [sum w X X']^{-1} sum w R X,

and the covariance of sqrt(N) (theta_hat - theta) is estimated by
bread * meat * bread, where the meat sums each user's whole trajectory
before taking the outer product so within-user correlation is kept.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .numstats import chi2_inv, sym_inverse, sym_solve


@dataclass
class StepRecord:
    """Rows (one per user) of the scientist's dataset at a single step t."""

    user: np.ndarray
    t: int
    z: np.ndarray
    b: np.ndarray
    action: np.ndarray
    propensity: np.ndarray
    reward: np.ndarray


@dataclass
class TrialDataset:
    """Columnar dataset: arrays indexed (user, t - 1, ...)."""

    user: np.ndarray
    z: np.ndarray
    b: np.ndarray
    action: np.ndarray
    propensity: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        N, T = self.action.shape
        if self.z.shape[:2] != (N, T) or self.b.shape[:2] != (N, T):
            raise ValueError("z / b must have shape (N, T, .)")
        if self.propensity.shape != (N, T) or self.reward.shape != (N, T) or self.user.shape != (N,):
            raise ValueError("inconsistent dataset shapes")

    @property
    def N(self) -> int:
        return self.action.shape[0]

    @property
    def T(self) -> int:
        return self.action.shape[1]

    @property
    def p(self) -> int:
        return self.z.shape[2]

    @property
    def q(self) -> int:
        return self.b.shape[2]

    @classmethod
    def from_records(cls, records: list[StepRecord]) -> "TrialDataset":
        if not records:
            raise ValueError("no records")
        ts = [r.t for r in records]
        if ts != list(range(1, len(records) + 1)):
            raise ValueError("records must cover t = 1..T in order")
        user = records[0].user
        for r in records:
            if not np.array_equal(r.user, user):
                raise ValueError("every step must list the same users")
        return cls(
            user=np.asarray(user),
            z=np.stack([r.z for r in records], axis=1),
            b=np.stack([r.b for r in records], axis=1),
            action=np.stack([r.action for r in records], axis=1).astype(np.int64),
            propensity=np.stack([r.propensity for r in records], axis=1).astype(float),
            reward=np.stack([r.reward for r in records], axis=1).astype(float),
        )

    def subset(self, rows) -> "TrialDataset":
        return TrialDataset(self.user[rows], self.z[rows], self.b[rows], self.action[rows],
                            self.propensity[rows], self.reward[rows])

    def check_propensities(self) -> None:
        pi = self.propensity
        if not np.all((pi > 0.0) & (pi < 1.0)):
            raise ValueError("propensities must lie strictly inside (0, 1) for the weighted estimator")


@dataclass
class AnalysisReport:
    theta_hat: np.ndarray
    sigma_theta_hat: np.ndarray
    delta_hat: np.ndarray
    sigma_delta_hat: np.ndarray
    statistic: float
    critical: float
    reject: bool

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "sigma_theta_hat": self.sigma_theta_hat.tolist(),
            "delta_hat": self.delta_hat.tolist(),
            "sigma_delta_hat": self.sigma_delta_hat.tolist(),
            "statistic": self.statistic,
            "critical": self.critical,
            "reject": self.reject,
        }


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def design_row(b, z, action, propensity) -> np.ndarray:
    """[b; (A - pi) z]; works row-wise on stacked inputs too."""
    b = np.asarray(b, dtype=float)
    z = np.asarray(z, dtype=float)
    centred = np.asarray(action, dtype=float) - np.asarray(propensity, dtype=float)
    return np.concatenate([b, centred[..., None] * z], axis=-1)


def design(data: TrialDataset) -> tuple[np.ndarray, np.ndarray]:
    """Design tensor X (N, T, q + p) and weights 1 / (pi (1 - pi)) (N, T)."""
    data.check_propensities()
    X = design_row(data.b, data.z, data.action, data.propensity)
    w = 1.0 / (data.propensity * (1.0 - data.propensity))
    return X, w


_RANK_TOL = 1e-10


def working_basis(b: np.ndarray) -> np.ndarray:
    """Orthonormal basis (q, r) of the row space of the stacked working features.

    The effect estimate depends on B only through its column span, so
    collinear working features (e.g. a baseline that is linear in t next to
    pi * Z under a fixed pi) are reduced to r independent directions instead
    of making the Gram matrix singular.
    """
    q = b.shape[-1]
    if q == 0:
        return np.eye(0)
    flat = b.reshape(int(np.prod(b.shape[:-1])), q)
    _, sv, vt = np.linalg.svd(flat, full_matrices=False)
    rank = int(np.sum(sv > _RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank == flat.shape[1]:
        return np.eye(flat.shape[1])
    return vt[:rank].T


def _reduced_design(data: TrialDataset):
    data.check_propensities()
    basis = working_basis(data.b)
    b = data.b if basis.shape[1] == data.q else data.b @ basis
    X = design_row(b, data.z, data.action, data.propensity)
    w = 1.0 / (data.propensity * (1.0 - data.propensity))
    return X, w, basis


def _expand(basis: np.ndarray, p: int) -> np.ndarray:
    """Map from reduced coordinates [gamma_r; delta] back to [gamma; delta]."""
    q, r = basis.shape
    E = np.zeros((q + p, r + p))
    E[:q, :r] = basis
    E[q:, r:] = np.eye(p)
    return E


def _gram(X, w, N):
    G = np.einsum("nt,nti,ntj->ij", w, X, X) / N
    return 0.5 * (G + G.T)


def _fit_reduced(data: TrialDataset):
    X, w, basis = _reduced_design(data)
    G = _gram(X, w, data.N)
    h = np.einsum("nt,nt,nti->i", w, data.reward, X) / data.N
    return sym_solve(G, h), X, w, G, basis


def fit_wls(data: TrialDataset) -> np.ndarray:
    theta_r, _, _, _, basis = _fit_reduced(data)
    return _expand(basis, data.p) @ theta_r


def _leverage_adjusted(X, w, resid, bread, N):
    # Mancl-DeRouen style: e_n <- (I - H_n)^{-1} e_n with H_n = X_n (N G)^{-1} X_n' W_n
    out = np.empty_like(resid)
    for n in range(X.shape[0]):
        H = X[n] @ bread @ X[n].T * w[n][None, :] / N
        out[n] = np.linalg.solve(np.eye(H.shape[0]) - H, resid[n])
    return out


def _sandwich_reduced(X, w, reward, theta_r, N, small_sample_correction):
    bread = sym_inverse(_gram(X, w, N))
    resid = reward - np.einsum("nti,i->nt", X, theta_r)
    if small_sample_correction:
        resid = _leverage_adjusted(X, w, resid, bread, N)
    u = np.einsum("nt,nt,nti->ni", w, resid, X)
    meat = u.T @ u / N
    cov = bread @ meat @ bread
    return 0.5 * (cov + cov.T)


def sandwich_cov(data: TrialDataset, theta_hat, small_sample_correction: bool = False) -> np.ndarray:
    """bread * meat * bread with the per-user meat (1/N) sum_n u_n u_n'."""
    X, w, basis = _reduced_design(data)
    E = _expand(basis, data.p)
    theta_r = E.T @ np.asarray(theta_hat, dtype=float)
    cov = _sandwich_reduced(X, w, data.reward, theta_r, data.N, small_sample_correction)
    return E @ cov @ E.T


def run_test(theta_hat, sigma_theta_hat, N: int, p: int, alpha0: float) -> AnalysisReport:
    """Chi-square test of delta = 0 with statistic N delta' Sigma_delta^{-1} delta."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    sigma_theta_hat = np.asarray(sigma_theta_hat, dtype=float)
    q = theta_hat.size - p
    delta = theta_hat[q:]
    sigma_delta = sigma_theta_hat[q:, q:]
    if np.all(delta == 0.0):
        statistic = 0.0
    else:
        statistic = float(N * delta @ sym_solve(sigma_delta, delta))
    critical = chi2_inv(1.0 - alpha0, p)
    return AnalysisReport(theta_hat, sigma_theta_hat, delta, sigma_delta, statistic, critical, statistic > critical)


def analyze(data: TrialDataset, alpha0: float = 0.05, small_sample_correction: bool = False) -> AnalysisReport:
    theta_r, X, w, _, basis = _fit_reduced(data)
    E = _expand(basis, data.p)
    cov_r = _sandwich_reduced(X, w, data.reward, theta_r, data.N, small_sample_correction)
    return run_test(E @ theta_r, E @ cov_r @ E.T, data.N, data.p, alpha0)


# ---------------------------------------------------------------------------
# regret / return
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReturnMetrics:
    """Per-user averages over one replication."""

    avg_return: float
    reg: float
    reg_c: float


def metrics(standard_oracle, clipped_oracle, expected_reward, reward) -> ReturnMetrics:
    """Average return and regrets from (N, T) per-step arrays.

    ``expected_reward`` is E[R | H] under the propensity that was actually
    used; averaging it over replications estimates E[sum_t R] with less noise
    than the realised rewards.
    """
    std = np.asarray(standard_oracle, dtype=float).sum(axis=1)
    clp = np.asarray(clipped_oracle, dtype=float).sum(axis=1)
    exp = np.asarray(expected_reward, dtype=float).sum(axis=1)
    ret = np.asarray(reward, dtype=float).sum(axis=1)
    n = std.size
    return ReturnMetrics(
        avg_return=math.fsum(ret) / n,
        reg=math.fsum(std - exp) / n,
        reg_c=math.fsum(clp - exp) / n,
    )


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def dataset_header(p: int, q: int) -> list[str]:
    return ["user", "t", "action", "propensity", "reward"] + [f"z_{i}" for i in range(1, p + 1)] + [f"b_{i}" for i in range(1, q + 1)]


def dataset_to_csv(data: TrialDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset_header(data.p, data.q))
    for n in range(data.N):
        for t in range(data.T):
            row = [str(int(data.user[n])), str(t + 1), str(int(data.action[n, t])),
                   _fmt(data.propensity[n, t]), _fmt(data.reward[n, t])]
            row += [_fmt(v) for v in data.z[n, t]]
            row += [_fmt(v) for v in data.b[n, t]]
            writer.writerow(row)
    return buf.getvalue()


def write_dataset_csv(data: TrialDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dataset_to_csv(data))


def read_dataset_csv(path) -> TrialDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    p = sum(1 for h in header if h.startswith("z_"))
    q = sum(1 for h in header if h.startswith("b_"))
    if header != dataset_header(p, q):
        raise ValueError(f"unexpected header {header}")
    if not body:
        raise ValueError("dataset has no rows")
    arr = np.array([[float(v) for v in r] for r in body])
    users = list(dict.fromkeys(int(u) for u in arr[:, 0]))
    N = len(users)
    if arr.shape[0] % N:
        raise ValueError("every user must have the same number of steps")
    T = arr.shape[0] // N
    order = np.lexsort((arr[:, 1], np.array([users.index(int(u)) for u in arr[:, 0]])))
    arr = arr[order].reshape(N, T, -1)
    if not np.all(arr[:, :, 1] == np.arange(1, T + 1)[None, :]):
        raise ValueError("each user needs exactly one record for t = 1..T")
    return TrialDataset(
        user=np.array(users, dtype=np.int64),
        z=arr[:, :, 5:5 + p],
        b=arr[:, :, 5 + p:5 + p + q],
        action=arr[:, :, 2].astype(np.int64),
        propensity=arr[:, :, 3],
        reward=arr[:, :, 4],
    )
