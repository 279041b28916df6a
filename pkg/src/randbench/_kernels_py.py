"""Pure-Python (numpy) propagation kernels; the fallback for ``_kernels``."""
import numpy as np


def propagate(table, codes, vec):
    """Apply ``table[codes[0]]``, then ``table[codes[1]]``, ... to ``vec``."""
    table = np.asarray(table, dtype=np.float64)
    out = np.array(vec, dtype=np.float64)
    for code in np.asarray(codes):
        if code < 0 or code >= table.shape[0]:
            raise IndexError(f"gate code {code} out of range")
        out = table[code] @ out
    return out


def propagate_many(table, codes, lengths, vec):
    """Row ``s`` of the result is ``propagate(table, codes[s, :lengths[s]], vec)``."""
    codes = np.asarray(codes)
    lengths = np.asarray(lengths)
    if np.any(lengths > codes.shape[1]):
        raise IndexError("sequence length exceeds code matrix width")
    result = np.empty((codes.shape[0], len(vec)), dtype=np.float64)
    for s in range(codes.shape[0]):
        result[s] = propagate(table, codes[s, : lengths[s]], vec)
    return result
