"""Compiled inner loops for the near-field model and its derivatives."""
import numba
import numpy as np

TWO_PI = 2.0 * np.pi


@numba.njit(cache=True, nogil=True, fastmath=False)
def nf_sums(xnm, dxg, w_re, w_im, tx, rx, f0, freqs, c):
    """Per-channel sums over RIS elements at each base-band frequency.

    Returns ``s0[k, l] = sum_nm w_nm exp(-j 2 pi (f0 + f_k) T_lnm)`` and
    ``s1[k, l, mu] = sum_nm w_nm exp(...) dT_lnm/dtheta_mu`` where ``T`` is the
    two-way delay and ``theta = (x, y, z, psi_x, psi_y, psi_z)``.
    """
    n_el = xnm.shape[0]
    n_ch = tx.shape[0]
    n_f = freqs.shape[0]
    s0 = np.zeros((n_f, n_ch), dtype=np.complex128)
    s1 = np.zeros((n_f, n_ch, 6), dtype=np.complex128)
    acc_re = np.zeros((n_f, 7))
    acc_im = np.zeros((n_f, 7))
    grad = np.zeros(6)
    for l in range(n_ch):
        acc_re[:, :] = 0.0
        acc_im[:, :] = 0.0
        for e in range(n_el):
            ax = xnm[e, 0] - tx[l, 0]
            ay = xnm[e, 1] - tx[l, 1]
            az = xnm[e, 2] - tx[l, 2]
            bx = xnm[e, 0] - rx[l, 0]
            by = xnm[e, 1] - rx[l, 1]
            bz = xnm[e, 2] - rx[l, 2]
            ra = np.sqrt(ax * ax + ay * ay + az * az)
            rb = np.sqrt(bx * bx + by * by + bz * bz)
            t = (ra + rb) / c
            ux = (ax / ra + bx / rb) / c
            uy = (ay / ra + by / rb) / c
            uz = (az / ra + bz / rb) / c
            grad[0] = ux
            grad[1] = uy
            grad[2] = uz
            for k in range(3):
                grad[3 + k] = ux * dxg[e, 0, k] + uy * dxg[e, 1, k] + uz * dxg[e, 2, k]
            ph0 = -TWO_PI * f0 * t
            c0 = np.cos(ph0)
            s0_ = np.sin(ph0)
            b_re = w_re[e] * c0 - w_im[e] * s0_
            b_im = w_re[e] * s0_ + w_im[e] * c0
            for k in range(n_f):
                ph = -TWO_PI * freqs[k] * t
                cp = np.cos(ph)
                sp = np.sin(ph)
                v_re = b_re * cp - b_im * sp
                v_im = b_re * sp + b_im * cp
                acc_re[k, 0] += v_re
                acc_im[k, 0] += v_im
                for mu in range(6):
                    acc_re[k, 1 + mu] += v_re * grad[mu]
                    acc_im[k, 1 + mu] += v_im * grad[mu]
        for k in range(n_f):
            s0[k, l] = acc_re[k, 0] + 1j * acc_im[k, 0]
            for mu in range(6):
                s1[k, l, mu] = acc_re[k, 1 + mu] + 1j * acc_im[k, 1 + mu]
    return s0, s1


@numba.njit(cache=True, nogil=True)
def bessel_j_orders(alpha, out):
    """Fill ``out[n] = J_n(alpha)`` for ``n = 0 .. len(out)-1``.

    Power series for ``|alpha| < 0.5``, Miller's downward recurrence with
    rescaling otherwise.
    """
    order = out.shape[0] - 1
    a = abs(alpha)
    if a < 0.5:
        half = 0.5 * a
        q = -half * half
        lead = 1.0
        for n in range(order + 1):
            if n > 0:
                lead *= half / n
            if lead == 0.0:
                out[n] = 0.0
                continue
            term = 1.0
            total = 1.0
            for k in range(1, 30):
                term *= q / (k * (n + k))
                total += term
                if abs(term) < 1e-18 * abs(total):
                    break
            out[n] = lead * total
    else:
        start = order + 20 + int(np.sqrt(160.0 * (order + 1))) + int(a)
        if start % 2:
            start += 1
        out[:] = 0.0
        jp1 = 0.0
        j = 1e-300
        norm = 0.0
        for n in range(start, 0, -1):
            jm1 = 2.0 * n / a * j - jp1
            jp1 = j
            j = jm1
            if abs(j) > 1e250:
                j *= 1e-250
                jp1 *= 1e-250
                norm *= 1e-250
                for i in range(n, order + 1):
                    out[i] *= 1e-250
            if n - 1 <= order:
                out[n - 1] = j
            if (n - 1) % 2 == 0 and n - 1 > 0:
                norm += 2.0 * j
        norm += j
        for i in range(order + 1):
            out[i] /= norm
    if alpha < 0:
        for n in range(1, order + 1, 2):
            out[n] = -out[n]


@numba.njit(cache=True, nogil=True)
def nf_chebyshev_sums(xnm, dxg, w_re, w_im, tx, rx, f0, bandwidth, c, order):
    """Chebyshev coefficients in ``x = 2 f / B`` of the near-field sums.

    For channel ``l`` with reference delay ``tc[l]``::

        sum_nm w_nm exp(-j 2 pi (f0 + f) T) g_mu
            = exp(-j pi B tc x) * sum_n coef[l, n, mu] T_n(x)

    with ``g_0 = 1`` and ``g_{1..6} = dT/dtheta``. ``coef`` already carries the
    ``2 (-j)^n`` Jacobi-Anger factors.
    """
    n_el = xnm.shape[0]
    n_ch = tx.shape[0]
    coef = np.zeros((n_ch, order + 1, 7), dtype=np.complex128)
    tc = np.zeros(n_ch)
    delays = np.zeros(n_el)
    jn = np.zeros(order + 1)
    acc_re = np.zeros((order + 1, 7))
    acc_im = np.zeros((order + 1, 7))
    vr = np.zeros(7)
    vi = np.zeros(7)
    for l in range(n_ch):
        for e in range(n_el):
            ax = xnm[e, 0] - tx[l, 0]
            ay = xnm[e, 1] - tx[l, 1]
            az = xnm[e, 2] - tx[l, 2]
            bx = xnm[e, 0] - rx[l, 0]
            by = xnm[e, 1] - rx[l, 1]
            bz = xnm[e, 2] - rx[l, 2]
            delays[e] = (np.sqrt(ax * ax + ay * ay + az * az)
                         + np.sqrt(bx * bx + by * by + bz * bz)) / c
        t_ref = 0.5 * (delays.min() + delays.max())
        tc[l] = t_ref
        acc_re[:, :] = 0.0
        acc_im[:, :] = 0.0
        for e in range(n_el):
            ax = xnm[e, 0] - tx[l, 0]
            ay = xnm[e, 1] - tx[l, 1]
            az = xnm[e, 2] - tx[l, 2]
            bx = xnm[e, 0] - rx[l, 0]
            by = xnm[e, 1] - rx[l, 1]
            bz = xnm[e, 2] - rx[l, 2]
            ra = np.sqrt(ax * ax + ay * ay + az * az)
            rb = np.sqrt(bx * bx + by * by + bz * bz)
            t = delays[e]
            ux = (ax / ra + bx / rb) / c
            uy = (ay / ra + by / rb) / c
            uz = (az / ra + bz / rb) / c
            ph0 = -TWO_PI * f0 * t
            c0 = np.cos(ph0)
            s0_ = np.sin(ph0)
            b_re = w_re[e] * c0 - w_im[e] * s0_
            b_im = w_re[e] * s0_ + w_im[e] * c0
            vr[0] = b_re
            vi[0] = b_im
            vr[1] = b_re * ux
            vi[1] = b_im * ux
            vr[2] = b_re * uy
            vi[2] = b_im * uy
            vr[3] = b_re * uz
            vi[3] = b_im * uz
            for k in range(3):
                gk = ux * dxg[e, 0, k] + uy * dxg[e, 1, k] + uz * dxg[e, 2, k]
                vr[4 + k] = b_re * gk
                vi[4 + k] = b_im * gk
            bessel_j_orders(np.pi * bandwidth * (t - t_ref), jn)
            for n in range(order + 1):
                jv = jn[n]
                for mu in range(7):
                    acc_re[n, mu] += jv * vr[mu]
                    acc_im[n, mu] += jv * vi[mu]
        for n in range(order + 1):
            # 2 (-j)^n for n >= 1, 1 for n = 0
            r = n % 4
            scale = 1.0 if n == 0 else 2.0
            for mu in range(7):
                re = acc_re[n, mu] * scale
                im = acc_im[n, mu] * scale
                if r == 0:
                    coef[l, n, mu] = re + 1j * im
                elif r == 1:
                    coef[l, n, mu] = im - 1j * re
                elif r == 2:
                    coef[l, n, mu] = -re - 1j * im
                else:
                    coef[l, n, mu] = -im + 1j * re
    return tc, coef
