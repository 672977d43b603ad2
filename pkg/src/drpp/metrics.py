"""Classification metrics for the credit experiments."""
import math

import numpy as np
from scipy.special import expit


def detection_rate(theta, X, y):
    """True-positive rate on the default class (label 1).

    A sample counts as detected when sigmoid(theta.x) >= 0.5, so theta = 0
    flags everyone. Returns NaN when the batch holds no defaulters.
    """
    y = np.asarray(y)
    pos = y == 1
    if not pos.any():
        return math.nan
    scores = expit(np.einsum("ij,j->i", np.asarray(X, float)[pos], np.asarray(theta, float)))
    return float(np.mean(scores >= 0.5))


def accuracy(theta, X, y):
    scores = expit(np.einsum("ij,j->i", np.asarray(X, float), np.asarray(theta, float)))
    return float(np.mean((scores >= 0.5) == (np.asarray(y) == 1)))
