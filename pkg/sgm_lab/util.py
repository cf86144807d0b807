import numpy as np


def as_rows(x):
    """Return ``x`` as a 2-D float array of row vectors and whether it was a single vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[np.newaxis, :], True
    return arr, False


def rowdot(u, v):
    """
    Row-wise inner products accumulated left to right over the last axis.

    The fixed accumulation order makes every row's result independent of how many
    rows are processed together, which the replication blocks rely on.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    acc = u[..., 0] * v[..., 0]
    for j in range(1, u.shape[-1]):
        acc = acc + u[..., j] * v[..., j]
    return acc


def sq_norms(x):
    return rowdot(x, x)


def rows_matvec(mat, x):
    """
    Apply ``mat`` (shared ``(p, d)`` or per-row ``(R, p, d)``) to the rows of ``x``,
    accumulating columns in a fixed order.
    """
    mat = np.asarray(mat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    acc = mat[..., 0] * x[..., 0:1]
    for j in range(1, mat.shape[-1]):
        acc = acc + mat[..., j] * x[..., j : j + 1]
    return acc


def fixed_order_mean(rows):
    """Mean over the first axis, summing rows strictly in index order."""
    rows = np.asarray(rows, dtype=np.float64)
    acc = np.array(rows[0], copy=True)
    for row in rows[1:]:
        acc = acc + row
    return acc / rows.shape[0]


def shortest_repr(value):
    # repr of a Python float is the shortest string that round-trips.
    return repr(float(value))
