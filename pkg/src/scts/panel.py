"""Panel data model, ground-truth factor model and instance generators.

Epochs are stored in one contiguous axis: the first ``T0`` columns are the
pre-treatment period (actions forced to zero), the next ``T`` columns the
treatment period.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, RankError
from .linalg import truncated_svd

RANK_TOL = 1e-10


@dataclass(frozen=True)
class FactorModelSpec:
    """Ground truth for a synthetic instance.

    Donor ``i`` at epoch ``t`` has mean ``loadings[i] @ factors[t]``; the
    experimental unit has mean ``tau_star * a_t + lambda_star @ factors[t]``.
    """

    n: int
    r: int
    T0: int
    T: int
    sigma: float
    tau_star: float
    loadings: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)
    lambda_star: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.r < 1 or self.n < self.r:
            raise ValueError(f"need n >= r >= 1, got n={self.n}, r={self.r}")
        if self.T0 < 0 or self.T < 1:
            raise ValueError(f"need T0 >= 0 and T >= 1, got T0={self.T0}, T={self.T}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if np.shape(self.loadings) != (self.n, self.r):
            raise ValueError(f"loadings must be {self.n}x{self.r}, got {np.shape(self.loadings)}")
        if np.shape(self.factors) != (self.T0 + self.T, self.r):
            raise ValueError(
                f"factors must be {self.T0 + self.T}x{self.r}, got {np.shape(self.factors)}"
            )
        if np.shape(self.lambda_star) != (self.r,):
            raise ValueError(f"lambda_star must have length {self.r}")

    @classmethod
    def random(cls, n, r, T0, T, sigma=1.0, tau_star=1.0, seed=0, canonical=True):
        """Gaussian instance: loadings, factors and unit loadings all i.i.d. N(0, 1).

        With ``canonical=True`` the draw is re-expressed in the canonical
        SVD basis (same means, different parametrisation) so that context
        norms and ``||lambda_star||`` refer to that basis.
        """
        rng = np.random.default_rng(seed)
        spec = cls(
            n=n, r=r, T0=T0, T=T, sigma=float(sigma), tau_star=float(tau_star),
            loadings=rng.standard_normal((n, r)),
            factors=rng.standard_normal((T0 + T, r)),
            lambda_star=rng.standard_normal(r),
        )
        return spec.canonical() if canonical else spec

    def with_tau(self, tau_star: float) -> "FactorModelSpec":
        return replace(self, tau_star=float(tau_star))

    def with_sigma(self, sigma: float) -> "FactorModelSpec":
        return replace(self, sigma=float(sigma))

    @property
    def donor_means(self) -> np.ndarray:
        return self.loadings @ self.factors.T

    @property
    def unit_base_means(self) -> np.ndarray:
        """Mean of the experimental unit with no treatment."""
        return self.factors @ self.lambda_star

    @property
    def context_bound(self) -> float:
        """max_t ||z_t||, the context norm bound B (also the constant c2)."""
        return float(np.max(np.linalg.norm(self.factors, axis=1)))

    @property
    def lambda_norm(self) -> float:
        return float(np.linalg.norm(self.lambda_star))

    def canonical(self) -> "FactorModelSpec":
        Lam, Z = canonicalize_decomposition(self.donor_means, self.r)
        # Z = Z_old @ H for an invertible H; keep <lambda*, z_t> unchanged
        H, *_ = np.linalg.lstsq(self.factors, Z, rcond=None)
        lam = np.linalg.solve(H, self.lambda_star)
        return replace(self, loadings=Lam, factors=Z, lambda_star=lam)


@dataclass
class PanelData:
    """Observed panel up to the current epoch.

    ``donor_obs`` is n x t, ``unit_obs`` and ``actions`` have length t.
    """

    donor_obs: np.ndarray
    unit_obs: np.ndarray
    actions: np.ndarray
    T0: int

    def __post_init__(self):
        t = self.unit_obs.shape[0]
        if self.donor_obs.ndim != 2 or self.donor_obs.shape[1] != t or self.actions.shape[0] != t:
            raise ValueError(
                "epoch counts disagree: donor_obs "
                f"{self.donor_obs.shape}, unit_obs {self.unit_obs.shape}, actions {self.actions.shape}"
            )
        if np.any(self.actions[: self.T0] != 0):
            raise ValueError("pre-treatment actions must be 0")

    @property
    def n(self) -> int:
        return self.donor_obs.shape[0]

    @property
    def epochs(self) -> int:
        return self.unit_obs.shape[0]

    @property
    def treatment_actions(self) -> np.ndarray:
        return self.actions[self.T0:]

    @property
    def treatment_epochs(self) -> int:
        return self.epochs - self.T0


@dataclass(frozen=True)
class EpochObservation:
    donor_row: np.ndarray
    unit_value: float


class _BufferedGenerator:
    """Shared epoch bookkeeping for generators that fill a fixed-size panel."""

    def __init__(self, n: int, T0: int, T: int, tau_star: float):
        self.n = n
        self.T0 = T0
        self.T = T
        self.tau_star = float(tau_star)
        self._Y = np.zeros((n, T0 + T))
        self._y0 = np.zeros(T0 + T)
        self._a = np.zeros(T0 + T, dtype=np.int8)
        self._t = 0

    @property
    def epochs_emitted(self) -> int:
        return self._t

    def panel(self) -> PanelData:
        t = self._t
        return PanelData(self._Y[:, :t], self._y0[:t], self._a[:t], min(self.T0, t))

    def step(self, action: int) -> EpochObservation:
        t = self._t
        if t >= self.T0 + self.T:
            raise RuntimeError("generator exhausted")
        action = int(action)
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action}")
        if t < self.T0 and action != 0:
            raise ValueError("actions in the pre-treatment period must be 0")
        donor, unit = self._emit(t, action)
        self._Y[:, t] = donor
        self._y0[t] = unit
        self._a[t] = action
        self._t += 1
        return EpochObservation(self._Y[:, t].copy(), float(unit))

    def _emit(self, t: int, action: int):
        raise NotImplementedError


class InstanceGenerator(_BufferedGenerator):
    """Streams observations from a :class:`FactorModelSpec`.

    One RNG stream per instance; each epoch draws the unit noise first and
    then the n donor noises, so the noise is independent of the actions.
    """

    def __init__(self, spec: FactorModelSpec, seed):
        super().__init__(spec.n, spec.T0, spec.T, spec.tau_star)
        self.spec = spec
        self._rng = np.random.default_rng(seed)
        self._donor_means = spec.donor_means
        self._unit_means = spec.unit_base_means

    def _emit(self, t, action):
        eps = self.spec.sigma * self._rng.standard_normal(self.n + 1)
        donor = self._donor_means[:, t] + eps[1:]
        unit = self.spec.tau_star * action + self._unit_means[t] + eps[0]
        return donor, unit


def generate_instance(spec: FactorModelSpec, seed) -> InstanceGenerator:
    return InstanceGenerator(spec, seed)


class SemiSyntheticGenerator(_BufferedGenerator):
    """Experimental unit is row ``unit_index`` of ``O`` plus ``tau_star * a_t``."""

    def __init__(self, O: np.ndarray, unit_index: int, tau_star: float, T0: int):
        O = np.asarray(O, dtype=float)
        if not 0 <= unit_index < O.shape[0]:
            raise IndexError(f"unit_index {unit_index} out of range for {O.shape[0]} units")
        if not 0 <= T0 < O.shape[1]:
            raise ValueError(f"T0={T0} leaves no treatment epochs in {O.shape[1]} columns")
        super().__init__(O.shape[0] - 1, T0, O.shape[1] - T0, tau_star)
        self.unit_index = unit_index
        self._unit_row = O[unit_index]
        self._donors = np.delete(O, unit_index, axis=0)

    def _emit(self, t, action):
        return self._donors[:, t], self._unit_row[t] + self.tau_star * action


def make_semi_synthetic(O, unit_index: int, tau_star: float, T0: int) -> SemiSyntheticGenerator:
    return SemiSyntheticGenerator(O, unit_index, tau_star, T0)


def canonicalize_decomposition(Ybar: np.ndarray, r: int):
    """Canonical factorisation ``Ybar = Lambda @ Z.T`` of an exactly rank-r matrix.

    ``Lambda = sqrt(n) U`` and ``Z = V S / sqrt(n)`` from the rank-r SVD.

    Raises
    ------
    RankError
        If ``s_r / s_1 <= 1e-10``.
    """
    Ybar = np.asarray(Ybar, dtype=float)
    n = Ybar.shape[0]
    if r < 1 or r > min(Ybar.shape):
        raise RankError(f"rank {r} impossible for a {Ybar.shape[0]}x{Ybar.shape[1]} matrix")
    U, s, V = truncated_svd(Ybar, r)
    if s[0] == 0.0 or s[r - 1] / s[0] <= RANK_TOL:
        raise RankError(f"matrix is rank deficient: s_r/s_1 = {s[r - 1] / s[0] if s[0] else 0.0:.3g}")
    return np.sqrt(n) * U, V * s / np.sqrt(n)


def residual_sigma(O: np.ndarray, r: int) -> float:
    """Root mean squared error of ``O`` against its best rank-r approximation."""
    O = np.asarray(O, dtype=float)
    U, s, V = truncated_svd(O, r)
    resid = O - (U * s) @ V.T
    return float(np.sqrt(np.mean(resid ** 2)))


# --- CSV ingestion ---------------------------------------------------------

ORIENTATIONS = ("units-by-epochs", "epochs-by-units")


@dataclass(frozen=True)
class LayoutConfig:
    orientation: str = "units-by-epochs"
    delimiter: str = ","
    has_header: bool = False
    index_column: bool = False
    T0: int | None = None

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ConfigError(f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}")
        if len(self.delimiter) != 1:
            raise ConfigError(f"delimiter must be a single character, got {self.delimiter!r}")


def read_key_values(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file (``#`` comments, also after a value; no sections)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return dict(parser["root"])


_DELIMS = {"comma": ",", "tab": "\t", "semicolon": ";", "space": " ", "\\t": "\t"}


def load_layout(path) -> LayoutConfig:
    kv = read_key_values(path)
    unknown = set(kv) - {"orientation", "delimiter", "has_header", "index_column", "T0"}
    if unknown:
        raise ConfigError(f"unknown layout keys: {sorted(unknown)}")
    kw = {}
    if "orientation" in kv:
        kw["orientation"] = kv["orientation"].strip()
    if "delimiter" in kv:
        d = kv["delimiter"].strip().strip('"').strip("'")
        kw["delimiter"] = _DELIMS.get(d, d)
    for key in ("has_header", "index_column"):
        if key in kv:
            kw[key] = _parse_bool(kv[key], key)
    if "T0" in kv:
        try:
            kw["T0"] = int(kv["T0"])
        except ValueError as exc:
            raise ConfigError(f"T0 must be an integer, got {kv['T0']!r}") from exc
    return LayoutConfig(**kw)


def _parse_bool(v: str, key: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {v!r}")


def ingest_panel_csv(path, layout: LayoutConfig | None = None):
    """Read a rectangular numeric CSV into a units x epochs matrix.

    Returns ``(O, unit_ids)``.  Missing, non-numeric and non-finite cells
    are errors; nothing is imputed.
    """
    layout = layout or LayoutConfig()
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=layout.delimiter) if row]
    header = None
    if layout.has_header and rows:
        header, rows = rows[0], rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")

    labels = []
    if layout.index_column:
        labels = [row[0] for row in rows]
        rows = [row[1:] for row in rows]
        if header is not None:
            header = header[1:]
    width = len(rows[0])
    if width == 0:
        raise DataError(f"{path}: no data columns")
    data = np.empty((len(rows), width))
    offset = 1 + int(layout.has_header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + offset} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            col = j + 1 + int(layout.index_column)
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {i + offset}, column {col}"
                ) from None
            if not np.isfinite(v):
                raise DataError(f"{path}: missing/non-finite value at row {i + offset}, column {col}")
            data[i, j] = v

    if layout.orientation == "units-by-epochs":
        ids = labels or [str(i) for i in range(data.shape[0])]
        return data, ids
    ids = list(header) if header is not None else [str(j) for j in range(data.shape[1])]
    return data.T.copy(), ids
