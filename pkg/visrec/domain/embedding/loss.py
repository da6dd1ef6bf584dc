import numpy as np

from visrec.domain.embedding.entity import Embedding


def euclidean_distance(a: Embedding, b: Embedding) -> float:
    a.check_dim(b)
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.sqrt(np.sum(diff * diff)))


def hinge(g: float, d_pos: float, d_neg: float) -> float:
    return max(0.0, g + d_pos - d_neg)


def triplet_loss(q: Embedding, p: Embedding, n: Embedding, g: float) -> float:
    q.check_dim(p)
    q.check_dim(n)
    return hinge(g, euclidean_distance(q, p), euclidean_distance(q, n))


def triplet_loss_batch(
    q: np.ndarray, p: np.ndarray, n: np.ndarray, g: float
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-triplet hinge losses and the gradient of their MEAN w.r.t. q, p, n rows.

    Triplets in the flat region of the hinge contribute exactly zero gradient.
    A zero distance has no direction; its subgradient is taken as zero.
    """
    count = q.shape[0]
    qp = q - p
    qn = q - n
    d_pos = np.sqrt(np.sum(qp * qp, axis=1))
    d_neg = np.sqrt(np.sum(qn * qn, axis=1))
    losses = np.maximum(0.0, g + d_pos - d_neg)

    active = (losses > 0).astype(np.float64)[:, None] / count
    unit_pos = np.divide(qp, d_pos[:, None], out=np.zeros_like(qp), where=d_pos[:, None] > 0)
    unit_neg = np.divide(qn, d_neg[:, None], out=np.zeros_like(qn), where=d_neg[:, None] > 0)

    dq = active * (unit_pos - unit_neg)
    dp = -active * unit_pos
    dn = active * unit_neg
    return losses, (dq, dp, dn)
