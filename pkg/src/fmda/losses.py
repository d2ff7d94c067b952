"""Loss functions with values and analytic gradients.

Gradients are exact with respect to the tensors passed in. Hinge and norm
subgradients are fixed to 0 at their kinks so gradients stay bounded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .numeric import as_matrix

_P_FLOOR = 1e-300  # clamp for exactly-zero predicted probabilities


@dataclass(frozen=True)
class LossValue:
    """Total adaptation loss and its two parts: total = classification + lam * distance."""

    total: float
    classification: float
    distance: float
    lam: float = 0.0

    def __post_init__(self):
        recomposed = self.classification + self.lam * self.distance
        if abs(self.total - recomposed) > 1e-12 * max(1.0, abs(self.total)):
            raise ConfigurationError("loss parts do not add up to total")


@dataclass
class CombinedGrads:
    """Gradients of the total loss; source-side entries are None when unused."""

    logits: np.ndarray
    f_t: np.ndarray | None = None
    f_sp: np.ndarray | None = None
    f_sn: np.ndarray | None = None


def cross_entropy(probs, labels):
    """Mean negative log-probability of the correct class.

    Returns (loss, grad_logits) where grad_logits = (probs - onehot) / N,
    the exact gradient with respect to the logits that produced probs via
    softmax. Labels may be class indices or one-hot rows.
    """
    p = as_matrix(probs)
    y = np.asarray(labels)
    if y.ndim == 2:
        y = y.argmax(axis=1)
    y = y.astype(np.int64)
    n, c = p.shape
    if y.shape != (n,):
        raise ConfigurationError("labels length must match probability rows")
    if n == 0:
        raise UsageError("cross_entropy on an empty batch")
    if y.min() < 0 or y.max() >= c:
        raise ConfigurationError(f"labels must lie in [0, {c})")
    correct = p[np.arange(n), y]
    if np.any(correct == 0.0):
        warnings.warn("clamped zero probability in cross-entropy", RuntimeWarning)
        correct = np.maximum(correct, _P_FLOOR)
    loss = float(-np.log(correct).mean())
    grad = p.copy()
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad


def _normalized_rows(f):
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return f / safe, norms


def _chain_through_normalization(f, f_hat, norms, grad_hat):
    # d/df of g(f/||f||): project out the radial component, then divide by the norm.
    radial = (grad_hat * f_hat).sum(axis=1, keepdims=True)
    grad = (grad_hat - radial * f_hat) / np.where(norms > 0, norms, 1.0)
    grad[norms.ravel() == 0] = 0.0
    return grad


def _pair_distances(a, b):
    diff = a - b
    dist = np.linalg.norm(diff, axis=1)
    unit = np.zeros_like(diff)
    nz = dist > 0
    unit[nz] = diff[nz] / dist[nz, None]
    return dist, unit


def l2_distance_loss(f_t, f_sp, normalize: bool = False):
    """Mean of unsquared row distances ||f_t_i - f_sp_i||.

    Returns (loss, grad_f_t, grad_f_sp); the gradient at a coincident pair
    is defined as 0.
    """
    ft = as_matrix(f_t)
    fp = as_matrix(f_sp)
    if ft.shape != fp.shape:
        raise ConfigurationError("l2_distance_loss needs equal feature shapes")
    n = ft.shape[0]
    if n == 0:
        raise UsageError("l2_distance_loss on an empty batch")
    ft_h, ft_n = _normalized_rows(ft) if normalize else (ft, None)
    fp_h, fp_n = _normalized_rows(fp) if normalize else (fp, None)
    dist, unit = _pair_distances(ft_h, fp_h)
    loss = float(dist.mean())
    g_t = unit / n
    g_sp = -g_t
    if normalize:
        g_t = _chain_through_normalization(ft, ft_h, ft_n, g_t)
        g_sp = _chain_through_normalization(fp, fp_h, fp_n, g_sp)
    return loss, g_t, g_sp


def triplet_plus_loss(f_t, f_sp, f_sn, alpha: float, beta: float, normalize: bool = False):
    """Ranked hinge loss with margins alpha (inter-pair) and beta (absolute).

    Per row: [d_p - d_n + alpha]_+ + [d_p - beta]_+ averaged over the batch,
    with d_p/d_n the distances to the aligned positive/negative rows.
    Returns (loss, grad_f_t, grad_f_sp, grad_f_sn).
    """
    if alpha < 0 or beta < 0:
        raise ConfigurationError("triplet margins must be >= 0")
    ft = as_matrix(f_t)
    fp = as_matrix(f_sp)
    fn = as_matrix(f_sn)
    if not (ft.shape == fp.shape == fn.shape):
        raise ConfigurationError("triplet_plus_loss needs equal feature shapes")
    n = ft.shape[0]
    if n == 0:
        raise UsageError("triplet_plus_loss on an empty batch")
    ft_h, ft_n = _normalized_rows(ft) if normalize else (ft, None)
    fp_h, fp_n = _normalized_rows(fp) if normalize else (fp, None)
    fn_h, fn_n = _normalized_rows(fn) if normalize else (fn, None)

    d_p, unit_p = _pair_distances(ft_h, fp_h)
    d_n, unit_n = _pair_distances(ft_h, fn_h)
    h1 = d_p - d_n + alpha
    h2 = d_p - beta
    loss = float((np.maximum(h1, 0.0) + np.maximum(h2, 0.0)).mean())

    # Inactive hinges (including the kink itself) contribute zero gradient.
    a1 = (h1 > 0).astype(np.float64)
    a2 = (h2 > 0).astype(np.float64)
    coef_p = (a1 + a2) / n
    coef_n = -a1 / n
    g_t = coef_p[:, None] * unit_p + coef_n[:, None] * unit_n
    g_sp = -coef_p[:, None] * unit_p
    g_sn = -coef_n[:, None] * unit_n
    if normalize:
        g_t = _chain_through_normalization(ft, ft_h, ft_n, g_t)
        g_sp = _chain_through_normalization(fp, fp_h, fp_n, g_sp)
        g_sn = _chain_through_normalization(fn, fn_h, fn_n, g_sn)
    return loss, g_t, g_sp, g_sn


def combined_loss(
    probs,
    labels,
    f_t=None,
    f_sp=None,
    f_sn=None,
    *,
    method: str,
    lam: float,
    alpha: float = 1.0,
    beta: float = 0.3,
    normalize: bool = False,
):
    """Assemble the adaptation loss: classification on target plus lam times
    the distance loss selected by method.

    The classification term uses target predictions only. Returns
    (LossValue, CombinedGrads); all gradients are of the total.
    """
    if method not in ("finetune", "fmda-l2", "fmda-triplet"):
        raise UsageError(f"combined_loss does not handle method {method!r}")
    if lam < 0:
        raise ConfigurationError("lam must be >= 0")
    cls, grad_logits = cross_entropy(probs, labels)
    grads = CombinedGrads(logits=grad_logits)
    dist = 0.0
    if method == "fmda-l2":
        if f_t is None or f_sp is None:
            raise UsageError("fmda-l2 needs target and positive features")
        dist, g_t, g_sp = l2_distance_loss(f_t, f_sp, normalize=normalize)
        grads.f_t = lam * g_t
        grads.f_sp = lam * g_sp
    elif method == "fmda-triplet":
        if f_t is None or f_sp is None or f_sn is None:
            raise UsageError("fmda-triplet needs target, positive, and negative features")
        dist, g_t, g_sp, g_sn = triplet_plus_loss(
            f_t, f_sp, f_sn, alpha, beta, normalize=normalize
        )
        grads.f_t = lam * g_t
        grads.f_sp = lam * g_sp
        grads.f_sn = lam * g_sn
    value = LossValue(
        total=cls + lam * dist, classification=cls, distance=dist, lam=lam
    )
    return value, grads
