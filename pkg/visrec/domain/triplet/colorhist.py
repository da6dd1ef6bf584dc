from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab

from visrec.core.image.ppm import Image
from visrec.domain.triplet.constant import AB_RANGE, BACKGROUND_TOLERANCE, HIST_BINS, L_RANGE

MaskMode = Literal["auto", "all"]


@dataclass(frozen=True)
class ColorHistogram:
    values: np.ndarray
    # the foreground mask was empty and the whole image was used instead
    fallback: bool


def foreground_mask(image: Image, tolerance: int = BACKGROUND_TOLERANCE) -> np.ndarray:
    """Everything not reachable from the border through near-background pixels.

    The background reference is the per-channel median of the border pixels;
    a pixel is background-like when every channel is within ``tolerance``.
    """
    pixels = image.to_array().astype(np.int16)
    border = np.concatenate([pixels[0], pixels[-1], pixels[1:-1, 0], pixels[1:-1, -1]], axis=0)
    reference = np.median(border, axis=0)
    similar = np.all(np.abs(pixels - reference) <= tolerance, axis=2)

    labels, _ = ndimage.label(similar)
    edge_labels = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    edge_labels = edge_labels[edge_labels != 0]
    background = np.isin(labels, edge_labels)
    return ~background


def _bin(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * HIST_BINS).astype(np.int64)
    return np.clip(idx, 0, HIST_BINS - 1)


def colorhist_features(image: Image, mask: MaskMode | np.ndarray = "auto") -> ColorHistogram:
    """L1-normalized 8x8x8 CIELAB histogram (D65) of the foreground pixels."""
    if isinstance(mask, str):
        selected = foreground_mask(image) if mask == "auto" else np.ones((image.height, image.width), dtype=bool)
    else:
        selected = np.asarray(mask, dtype=bool)

    fallback = not selected.any()
    if fallback:
        selected = np.ones((image.height, image.width), dtype=bool)

    lab = rgb2lab(image.to_array())[selected]
    l_idx = _bin(lab[:, 0], *L_RANGE)
    a_idx = _bin(lab[:, 1], *AB_RANGE)
    b_idx = _bin(lab[:, 2], *AB_RANGE)
    flat = (l_idx * HIST_BINS + a_idx) * HIST_BINS + b_idx

    counts = np.bincount(flat, minlength=HIST_BINS**3).astype(np.float64)
    return ColorHistogram(values=counts / counts.sum(), fallback=fallback)
