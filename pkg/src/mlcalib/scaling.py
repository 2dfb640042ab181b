"""Post hoc temperature and Platt scaling fitted by NLL minimization.

Temperature scaling maps logits through sigmoid(z / T); Platt scaling adds
a bias, sigmoid(z / T + b).  T > 0 is enforced by optimizing tau = ln T,
which keeps the (convex) binary cross-entropy objective unconstrained and
smooth.  Fitting runs full-batch Adam with analytic gradients; everything
is deterministic, there is no stochasticity anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, ValidationError, sigmoid

TS = "ts"
PS = "ps"
GLOBAL = "global"
PER_CLASS = "per-class"

_LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ScalingParams:
    """Fitted scaling parameters.

    ``tau`` is the log-temperature (T = exp(tau)); ``bias`` is identically
    zero for temperature scaling.  Global scope stores scalars (0-d arrays),
    per-class scope stores one value per class, aligned with ``classes``.
    """

    method: str
    scope: str
    tau: np.ndarray
    bias: np.ndarray
    classes: tuple | None = None
    fitted_on: str = ""

    def __post_init__(self):
        if self.method not in (TS, PS):
            raise ValidationError(f"method must be '{TS}' or '{PS}', got {self.method!r}")
        if self.scope not in (GLOBAL, PER_CLASS):
            raise ValidationError(
                f"scope must be '{GLOBAL}' or '{PER_CLASS}', got {self.scope!r}"
            )
        tau = np.array(self.tau, dtype=np.float64, copy=True)
        bias = np.array(self.bias, dtype=np.float64, copy=True)
        if self.scope == GLOBAL:
            if tau.ndim != 0 or bias.ndim != 0:
                raise ValidationError("global params must hold scalar tau and bias")
        else:
            if tau.ndim != 1 or bias.shape != tau.shape:
                raise ValidationError("per-class params must hold 1-d tau and bias")
            if self.classes is None or len(self.classes) != tau.shape[0]:
                raise ValidationError(
                    "per-class params must carry one class name per parameter"
                )
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(bias))):
            raise ValidationError("non-finite scaling parameter")
        if self.method == TS and np.any(bias != 0.0):
            raise ValidationError("temperature scaling must keep bias at 0")
        tau.flags.writeable = False
        bias.flags.writeable = False
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "bias", bias)
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def temperature(self) -> np.ndarray:
        return np.exp(self.tau)

    @classmethod
    def identity(cls, method: str = TS, scope: str = GLOBAL, classes=None):
        """T = 1, b = 0: leaves confidences unchanged."""
        if scope == GLOBAL:
            return cls(method, scope, np.float64(0.0), np.float64(0.0))
        c = len(classes)
        return cls(method, scope, np.zeros(c), np.zeros(c), classes=tuple(classes))

    def to_json_dict(self) -> dict:
        doc = {"method": self.method, "scope": self.scope}
        if self.classes is not None:
            doc["classes"] = list(self.classes)
        if self.scope == GLOBAL:
            doc["tau"] = float(self.tau)
            doc["T"] = float(np.exp(self.tau))
            doc["b"] = float(self.bias)
        else:
            doc["tau"] = [float(t) for t in self.tau]
            doc["T"] = [float(t) for t in np.exp(self.tau)]
            doc["b"] = [float(b) for b in self.bias]
        doc["fitted_on"] = self.fitted_on
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict):
        try:
            method = doc["method"]
            scope = doc["scope"]
            tau = doc["tau"]
            bias = doc["b"]
        except KeyError as exc:
            raise ValidationError(f"params document missing key {exc}") from exc
        classes = tuple(doc["classes"]) if "classes" in doc else None
        if scope == GLOBAL:
            tau_arr = np.float64(tau)
            bias_arr = np.float64(bias)
        else:
            tau_arr = np.asarray(tau, dtype=np.float64)
            bias_arr = np.asarray(bias, dtype=np.float64)
        return cls(
            method=method,
            scope=scope,
            tau=tau_arr,
            bias=bias_arr,
            classes=classes,
            fitted_on=str(doc.get("fitted_on", "")),
        )


@dataclass(frozen=True)
class FitTrace:
    """Optimizer provenance: budget, endpoints, optional NLL history."""

    steps: int
    lr: float
    nll_initial: float
    nll_final: float
    nll_history: tuple | None = None

    def to_json_dict(self) -> dict:
        doc = {
            "steps": self.steps,
            "lr": self.lr,
            "nll_initial": self.nll_initial,
            "nll_final": self.nll_final,
        }
        if self.nll_history is not None:
            doc["nll_history"] = list(self.nll_history)
        return doc


@dataclass(frozen=True)
class FitConfig:
    """Adam settings; lr and steps are the documented defaults, the rest are
    the optimizer's canonical constants."""

    lr: float = 0.001
    steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    record_history: bool = False


def _check_dims(logits: np.ndarray, params: ScalingParams):
    if params.scope == PER_CLASS and logits.shape[1] != params.tau.shape[0]:
        raise ValidationError(
            f"dimension mismatch: {logits.shape[1]} classes in logits, "
            f"{params.tau.shape[0]} per-class parameters"
        )


def apply_scaling(logits, params: ScalingParams) -> np.ndarray:
    """Rescale logits and map to probabilities: sigmoid(z / T + b).

    Per-class parameters broadcast over rows; with T = 1, b = 0 the output
    equals sigmoid of the raw logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"logits must be 2-d, got shape {z.shape}")
    _check_dims(z, params)
    t = np.exp(params.tau)
    return sigmoid(z / t + params.bias)


def bce_nll(logits, labels, params: ScalingParams) -> float:
    """Mean binary cross-entropy of scaled confidences against labels.

    Probabilities are clamped to [1e-12, 1 - 1e-12] inside the logs so
    saturated logits cannot produce infinities.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValidationError(f"shape mismatch: logits {z.shape}, labels {y.shape}")
    p = apply_scaling(z, params)
    p = np.clip(p, _LOG_CLAMP, 1.0 - _LOG_CLAMP)
    ll = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return float(np.mean(-ll))


def gradients(logits, labels, params: ScalingParams):
    """Analytic gradients of bce_nll with respect to (tau, bias).

    The objective is the mean over all N*C entries, so d/db is the mean
    residual (p - y) for global scope and each column's residual sum over
    N*C for per-class scope; d/dtau follows the chain rule through
    T = exp(tau), with (p - y) * (-z / T) in place of the residual.  Shapes
    match the parameter shapes (scalars global, C-vectors per class).
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValidationError(f"shape mismatch: logits {z.shape}, labels {y.shape}")
    _check_dims(z, params)
    t = np.exp(params.tau)
    p = sigmoid(z / t + params.bias)
    resid = p - y
    tau_term = resid * (-z / t)
    if params.scope == GLOBAL:
        return np.mean(tau_term), np.mean(resid)
    denom = float(z.size)
    return np.sum(tau_term, axis=0) / denom, np.sum(resid, axis=0) / denom


def _grad_arrays(z, y, tau, bias, scope):
    # same math as gradients(), on raw parameter arrays inside the fit loop
    t = np.exp(tau)
    p = sigmoid(z / t + bias)
    resid = p - y
    tau_term = resid * (-z / t)
    if scope == GLOBAL:
        return np.mean(tau_term), np.mean(resid)
    denom = float(z.size)
    return np.sum(tau_term, axis=0) / denom, np.sum(resid, axis=0) / denom


def fit(
    logits,
    labels,
    method: str = PS,
    scope: str = GLOBAL,
    cfg: FitConfig | None = None,
    classes=None,
    fitted_on: str = "",
):
    """Fit scaling parameters by full-batch Adam on the BCE objective.

    Initialization is tau = 0 (T = 1), b = 0.  Per-class scope fits every
    column jointly (the coordinates are independent); classes without a
    single positive in the calibration data keep identity parameters, since
    their NLL optimum would run off to b = -inf.  Returns the fitted
    ScalingParams and a FitTrace.
    """
    if cfg is None:
        cfg = FitConfig()
    if method not in (TS, PS):
        raise ValidationError(f"method must be '{TS}' or '{PS}', got {method!r}")
    if scope not in (GLOBAL, PER_CLASS):
        raise ValidationError(f"scope must be '{GLOBAL}' or '{PER_CLASS}', got {scope!r}")
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.ndim != 2 or z.shape != y.shape:
        raise ValidationError(f"shape mismatch: logits {z.shape}, labels {y.shape}")
    if z.size == 0:
        raise ValidationError("cannot fit on an empty calibration set")
    if scope == PER_CLASS:
        if classes is None:
            classes = tuple(f"class_{c}" for c in range(z.shape[1]))
        if len(classes) != z.shape[1]:
            raise ValidationError(
                f"dimension mismatch: {z.shape[1]} columns, {len(classes)} class names"
            )
        k = z.shape[1]
        tau = np.zeros(k)
        bias = np.zeros(k)
    else:
        tau = np.float64(0.0)
        bias = np.float64(0.0)

    def as_params(tau_v, bias_v):
        return ScalingParams(
            method=PS,  # carrier only; bias stays 0 on the TS path
            scope=scope,
            tau=tau_v,
            bias=bias_v,
            classes=tuple(classes) if scope == PER_CLASS else None,
            fitted_on=fitted_on,
        )

    nll_initial = bce_nll(z, y, as_params(tau, bias))
    history = [nll_initial] if cfg.record_history else None

    m_tau = np.zeros_like(tau)
    v_tau = np.zeros_like(tau)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    for t_step in range(1, cfg.steps + 1):
        g_tau, g_b = _grad_arrays(z, y, tau, bias, scope)
        if not (np.all(np.isfinite(g_tau)) and np.all(np.isfinite(g_b))):
            raise NumericalError(
                f"non-finite gradient at step {t_step} (tau={tau!r}, b={bias!r})"
            )
        c1 = 1.0 - cfg.beta1**t_step
        c2 = 1.0 - cfg.beta2**t_step
        m_tau = cfg.beta1 * m_tau + (1.0 - cfg.beta1) * g_tau
        v_tau = cfg.beta2 * v_tau + (1.0 - cfg.beta2) * g_tau * g_tau
        tau = tau - cfg.lr * (m_tau / c1) / (np.sqrt(v_tau / c2) + cfg.eps)
        if method == PS:
            m_b = cfg.beta1 * m_b + (1.0 - cfg.beta1) * g_b
            v_b = cfg.beta2 * v_b + (1.0 - cfg.beta2) * g_b * g_b
            bias = bias - cfg.lr * (m_b / c1) / (np.sqrt(v_b / c2) + cfg.eps)
        if history is not None:
            history.append(bce_nll(z, y, as_params(tau, bias)))

    if scope == PER_CLASS:
        # identity fallback for positive-free calibration columns
        no_pos = y.sum(axis=0) == 0
        if np.any(no_pos):
            tau = np.where(no_pos, 0.0, tau)
            bias = np.where(no_pos, 0.0, bias)

    params = ScalingParams(
        method=method,
        scope=scope,
        tau=tau,
        bias=np.zeros_like(bias) if method == TS else bias,
        classes=tuple(classes) if scope == PER_CLASS else None,
        fitted_on=fitted_on,
    )
    nll_final = bce_nll(z, y, params)
    trace = FitTrace(
        steps=cfg.steps,
        lr=cfg.lr,
        nll_initial=nll_initial,
        nll_final=nll_final,
        nll_history=tuple(history) if history is not None else None,
    )
    return params, trace


def save_params(params: ScalingParams, trace: FitTrace | None, path: str):
    """Write a params JSON document; floats carry 17 significant digits so
    the round trip is bit-exact."""
    from .report import dumps_canonical

    doc = params.to_json_dict()
    if trace is not None:
        doc["trace"] = trace.to_json_dict()
    with open(path, "w", newline="") as fh:
        fh.write(dumps_canonical(doc))
        fh.write("\n")


def load_params(path: str) -> ScalingParams:
    try:
        with open(path, "r") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read params file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"params file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"params file {path} must hold a JSON object")
    return ScalingParams.from_json_dict(doc)
