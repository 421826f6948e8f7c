"""NumPy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def wigner_grid(rho, xvec, pvec):
    """Parity-convention Wigner function of a single-mode density matrix.

    Returns an array of shape ``(len(pvec), len(xvec))`` with
    ``W[j, i] = (2/pi) Tr[D(beta) P D(beta)^+ rho]`` at ``beta = x_i + i p_j``.
    """
    rho = np.ascontiguousarray(rho, dtype=complex)
    d = rho.shape[0]
    X, P = np.meshgrid(np.asarray(xvec, float), np.asarray(pvec, float))
    bc = 2.0 * (X - 1j * P)  # 2 beta*
    r2 = 4.0 * (X * X + P * P)
    q = np.exp(-0.5 * r2).astype(complex)
    W = np.zeros(X.shape)
    for k in range(d):
        if k > 0:
            q = q * bc / np.sqrt(k)
        weight = 1.0 if k == 0 else 2.0
        g_prev = np.ones_like(r2)
        acc = rho[k, 0] * g_prev
        if d - k > 1:
            g = (1.0 + k - r2) / np.sqrt(k + 1.0)
            acc = acc - rho[k + 1, 1] * g
            for n in range(1, d - k - 1):
                g_next = ((2 * n + 1 + k - r2) * g - np.sqrt(n * (n + k)) * g_prev) / np.sqrt((n + 1.0) * (n + k + 1.0))
                g_prev, g = g, g_next
                sign = -1.0 if (n + 1) % 2 else 1.0
                acc = acc + sign * rho[n + 1 + k, n + 1] * g
        W += weight * np.real(acc * q)
    return (2.0 / np.pi) * W


def lindblad_rhs(rho, heff, jumps):
    """-i (Heff rho - rho Heff^+) + sum_k L_k rho L_k^+ for Hermitian rho."""
    x = -1j * (heff @ rho)
    out = x + x.conj().T
    for L in jumps:
        y = L @ rho
        out += (L @ y.conj().T).conj().T
    return out
