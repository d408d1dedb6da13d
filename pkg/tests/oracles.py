"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written in a different style from the
library code (explicit dense matrices, plain Python loops) so that an
agreement between the two routes actually means something.
"""

import numpy as np


def conv_matrix(kernel: np.ndarray, m_in: int) -> np.ndarray:
    """Dense matrix M with (M @ z)[k] = sum_j kernel[j] * z[j + k]."""
    s = kernel.shape[0]
    m_out = (m_in - s + 1) // s
    rows = m_out * s
    mat = np.zeros((rows, m_in))
    for k in range(rows):
        for j in range(s):
            mat[k, j + k] = kernel[j]
    return mat


def pool_matrix(m_out: int, s: int) -> np.ndarray:
    """Dense averaging matrix P with (P @ y)[i] = mean(y[i*s : (i+1)*s])."""
    mat = np.zeros((m_out, m_out * s))
    for i in range(m_out):
        for r in range(s):
            mat[i, i * s + r] = 1.0 / s
    return mat


def dense_forward(params, x: np.ndarray) -> float:
    """Network output via explicit matrix products, one layer at a time."""
    spec = params.spec
    z = np.asarray(x, dtype=float).copy()
    idx = 0
    for s in spec.conv_kernels:
        kernel = params.layers[idx]
        m_in = z.shape[0]
        mat = conv_matrix(kernel, m_in)
        pre = mat @ z
        act = np.maximum(pre, 0.0)
        m_out = (m_in - s + 1) // s
        z = pool_matrix(m_out, s) @ act
        idx += 1
    for _ in spec.fc_widths:
        w = params.layers[idx]
        pre = w.T @ z
        z = np.maximum(pre, 0.0)
        idx += 1
    a = params.layers[idx]
    return float(spec.out_scale * (a @ z))


def cl_resum(eta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Prefix sums of 2*eta*psi by plain accumulation; row t excludes step t."""
    out = [0.0]
    total = 0.0
    for k in range(len(eta) - 1):
        total += 2.0 * float(eta[k]) * float(psi[k])
        out.append(total)
    return np.array(out)


def gf_closed_form(t):
    """Both weights of the width-1 net w=c=1 on the datum (x=1, y=0).

    The flow dw/dt = -w*c^2*... stays symmetric, u' = -u^3 from L = u^4/2,
    hence u(t) = (1 + 2t)^(-1/2).
    """
    return 1.0 / np.sqrt(1.0 + 2.0 * np.asarray(t, dtype=float))


def layer_tail_probability(q: int, kappa: float, threshold: float) -> float:
    """Exact P(||layer||^2 > threshold) for q iid N(0, kappa^2/q) entries."""
    from scipy.stats import chi2

    return float(chi2.sf(threshold * q / kappa**2, df=q))


def psi_reference(ln: float, c_y: float) -> float:
    root = np.sqrt(2.0 * ln)
    return float(root * (c_y - root))


def power_integrand_reference(ln: float, c_y: float, alpha: int) -> float:
    base = alpha * ln
    return float(base ** ((alpha - 1) / alpha) * (c_y - base ** (1.0 / alpha)))
