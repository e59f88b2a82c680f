"""Pure-numpy fallback for the compiled Coulomb kernel.

Same signature and conventions as ``partialvp._kernels.coulomb_field``. Sums
over sources use numpy's pairwise reduction, so results agree with the
compensated compiled kernel to a few ulp but are not bitwise identical.
"""

import numpy as np

# bytes of scratch per target block: (block, sources) float64 matrices
_BLOCK_BYTES = 16 * 2**20


def coulomb_field(tx, ty, tz, sx, sy, sz, sq, eps2):
    tx, ty, tz = (np.ascontiguousarray(a, dtype=np.float64) for a in (tx, ty, tz))
    sx, sy, sz, sq = (np.ascontiguousarray(a, dtype=np.float64) for a in (sx, sy, sz, sq))
    nt, ns = tx.shape[0], sx.shape[0]
    if ty.shape[0] != nt or tz.shape[0] != nt:
        raise ValueError("target component arrays differ in length")
    if sy.shape[0] != ns or sz.shape[0] != ns or sq.shape[0] != ns:
        raise ValueError("source arrays differ in length")

    ex = np.zeros(nt)
    ey = np.zeros(nt)
    ez = np.zeros(nt)
    phi = np.zeros(nt)
    if nt == 0 or ns == 0:
        return ex, ey, ez, phi

    block = max(1, _BLOCK_BYTES // (8 * ns))
    for start in range(0, nt, block):
        sl = slice(start, min(nt, start + block))
        dx = tx[sl, None] - sx[None, :]
        dy = ty[sl, None] - sy[None, :]
        dz = tz[sl, None] - sz[None, :]
        r2 = dx * dx + dy * dy + dz * dz + eps2
        with np.errstate(divide="ignore"):
            inv = np.where(r2 > 0.0, 1.0 / np.sqrt(r2), 0.0)
        qinv = sq[None, :] * inv
        inv3 = qinv * inv * inv
        ex[sl] = np.sum(inv3 * dx, axis=1)
        ey[sl] = np.sum(inv3 * dy, axis=1)
        ez[sl] = np.sum(inv3 * dz, axis=1)
        phi[sl] = np.sum(qinv, axis=1)
    return ex, ey, ez, phi
