import numpy as np

from ..errors import DimensionError


def mse(pred, target):
    """Mean over all elements of the squared difference."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred.astype(np.float64) - target
    return float(np.mean(diff * diff))


def mse_grad(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse: prediction shape {pred.shape} != target shape {target.shape}")
    return (2.0 / pred.size) * (pred - target.astype(pred.dtype))
