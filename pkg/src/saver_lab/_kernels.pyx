# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation loops (twin of ``_kernels_py``; keep the two in lockstep)."""
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cdef enum:
    BASELINE = 0
    EXPLORE = 1
    TRACK = 2
    ONPOLICY = 3
    K_ONPOLICY = 0
    K_BASELINE = 1
    K_ORACLE = 2
    K_SAFE_ORACLE = 3
    K_SAVER = 4
    F_INJECT = 1
    F_KNOWN_BASE = 2
    F_GATE = 4
    F_RECORD = 8
    F_TRUE = 16
    F_EXPLORE = 32


cdef void _allocate(int S, int A, int L, const long long[:] level_ptr, const long long[:] succ_ptr,
                    const long long[:] succ_idx, const double[:] succ_prob, const double[:] pi,
                    const double* sig, double gamma, double* m, double* b, double* wbuf) noexcept nogil:
    cdef double g2 = gamma * gamma
    cdef int lvl, a, n_inf, n_sup
    cdef long long s, j, t
    cdef double tot, p, w, sg, spread
    for lvl in range(L, 0, -1):
        for s in range(level_ptr[lvl - 1], level_ptr[lvl]):
            tot = 0.0
            n_inf = 0
            for a in range(A):
                p = pi[s * A + a]
                if p <= 0.0:
                    w = 0.0
                else:
                    sg = sig[s * A + a]
                    spread = 0.0
                    for j in range(succ_ptr[s * A + a], succ_ptr[s * A + a + 1]):
                        t = succ_idx[j]
                        spread += succ_prob[j] * (m[t] * m[t])
                    if sg == INFINITY or spread == INFINITY:
                        w = INFINITY
                    else:
                        w = sqrt(p * p * (sg * sg + g2 * spread))
                wbuf[a] = w
                if w == INFINITY:
                    n_inf += 1
                else:
                    tot += w
            if n_inf > 0:
                m[s] = INFINITY
                for a in range(A):
                    b[s * A + a] = 1.0 / n_inf if wbuf[a] == INFINITY else 0.0
            elif tot > 0.0:
                m[s] = tot
                for a in range(A):
                    b[s * A + a] = wbuf[a] / tot
            else:
                m[s] = 0.0
                n_sup = 0
                for a in range(A):
                    if pi[s * A + a] > 0.0:
                        n_sup += 1
                for a in range(A):
                    b[s * A + a] = 1.0 / n_sup if pi[s * A + a] > 0.0 else 0.0


cdef inline int _argmax_ratio(long long s, int A, const double* b, const long long[:] count) noexcept nogil:
    cdef double best = -1.0
    cdef double ratio
    cdef int choice = 0
    cdef int a
    cdef long long T
    for a in range(A):
        T = count[s * A + a]
        if T == 0:
            ratio = INFINITY
        else:
            ratio = b[s * A + a] / <double>T
        if ratio > best:
            best = ratio
            choice = a
    return choice


cdef void _ucb_sigma(int S, int A, const long long[:] count, const double[:] sum_r, const double[:] sum_r2,
                     double coef, double* sig) noexcept nogil:
    cdef long long p, T
    cdef double mean, var
    for p in range(S * A):
        T = count[p]
        if T == 0:
            sig[p] = INFINITY
        else:
            mean = sum_r[p] / <double>T
            var = sum_r2[p] / <double>T - mean * mean
            if var < 0.0:
                var = 0.0
            sig[p] = sqrt(var) + coef / sqrt(<double>T)


cdef double _behavior_cost(int S, int A, int L, const long long[:] level_ptr, const long long[:] succ_ptr,
                           const long long[:] succ_idx, const double[:] succ_prob, const double[:] mu_c,
                           double gamma, int phase, const double[:] pi, const double* b,
                           const long long[:] count, double* vbuf) noexcept nogil:
    cdef int lvl, a, a0
    cdef long long s, j
    cdef double acc, q, nxt
    for lvl in range(L, 0, -1):
        for s in range(level_ptr[lvl - 1], level_ptr[lvl]):
            if phase == TRACK:
                a0 = _argmax_ratio(s, A, b, count)
            else:
                a0 = 0
            acc = 0.0
            for a in range(A):
                if phase == BASELINE:
                    q = 1.0 if a == 0 else 0.0
                elif phase == EXPLORE:
                    q = 1.0 / A
                elif phase == ONPOLICY:
                    q = pi[s * A + a]
                else:
                    q = 1.0 if a == a0 else 0.0
                if q > 0.0:
                    nxt = 0.0
                    for j in range(succ_ptr[s * A + a], succ_ptr[s * A + a + 1]):
                        nxt += succ_prob[j] * vbuf[succ_idx[j]]
                    acc += q * (mu_c[s * A + a] + gamma * nxt)
            vbuf[s] = acc
    return vbuf[0]


cdef long long _run_mdp(int S, int A, int L, const long long[:] level_ptr, const long long[:] succ_ptr,
                        const long long[:] succ_idx, const double[:] succ_prob, const double[:] pi,
                        const double[:] sig_true, const double[:] mu_r, const double[:] sd_r,
                        const double[:] mu_c, const double[:] sd_c, double gamma, double alpha,
                        double v_base, double coef, long long K, long long explore_h, int code, int flags,
                        const double[:] zr, const double[:] zc, const double[:] ut, const double[:] ua,
                        long long[:] count, double[:] sum_r, double[:] sum_r2, double[:] sum_c,
                        double[:] z_trace, signed char[:] phase_trace, int[:] act_trace,
                        double[:] true_trace, double* m, double* b, double* wbuf, double* sig,
                        double* vbuf, long long* path) noexcept nogil:
    cdef int inject = flags & F_INJECT
    cdef double credit = 0.0, true_sum = 0.0, z = 0.0, cum, u, r, c, y, cred
    cdef long long viol = 0, k, kk, p, v, j, nxt, T, s
    cdef int ph, l, a, a2, last, found
    cdef long long q
    if code == K_ORACLE or code == K_SAFE_ORACLE or (code == K_SAVER and inject):
        for q in range(S * A):
            sig[q] = sig_true[q]
        _allocate(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig, gamma, m, b, wbuf)
    for k in range(K):
        kk = k + 1
        if code == K_BASELINE:
            ph = BASELINE
        elif code == K_ORACLE:
            ph = TRACK
        elif code == K_ONPOLICY:
            ph = BASELINE if ((flags & F_GATE) and z < 0.0) else ONPOLICY
        elif z < 0.0:
            ph = BASELINE
        elif (flags & F_EXPLORE) and kk <= explore_h:
            ph = EXPLORE
        else:
            ph = TRACK
        if ph == TRACK and code == K_SAVER and not inject:
            _ucb_sigma(S, A, count, sum_r, sum_r2, coef, sig)
            _allocate(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig, gamma, m, b, wbuf)
        if flags & F_TRUE:
            true_sum += _behavior_cost(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, mu_c, gamma,
                                       ph, pi, b, count, vbuf)
            true_trace[k] = true_sum - (1.0 - alpha) * <double>kk * v_base
        s = 0
        for l in range(L):
            if ph == BASELINE:
                a = 0
            elif ph == TRACK:
                a = _argmax_ratio(s, A, b, count)
            elif ph == EXPLORE:
                a = <int>(ua[k * L + l] * A)
                if a >= A:
                    a = A - 1
            else:
                u = ua[k * L + l]
                cum = 0.0
                a = 0
                last = 0
                found = 0
                for a2 in range(A):
                    if pi[s * A + a2] > 0.0:
                        last = a2
                    cum += pi[s * A + a2]
                    if u < cum:
                        a = a2
                        found = 1
                        break
                if not found:
                    a = last
            p = s * A + a
            v = count[p]
            r = mu_r[p] + sd_r[p] * zr[p * K + v]
            c = mu_c[p] + sd_c[p] * zc[p * K + v]
            count[p] = v + 1
            sum_r[p] += r
            sum_r2[p] += r * r
            sum_c[p] += c
            path[l] = p
            if flags & F_RECORD:
                act_trace[k * L + l] = <int>p
            if l < L - 1:
                u = ut[p * K + v]
                cum = 0.0
                nxt = succ_idx[succ_ptr[p + 1] - 1]
                for j in range(succ_ptr[p], succ_ptr[p + 1]):
                    cum += succ_prob[j]
                    if u < cum:
                        nxt = succ_idx[j]
                        break
                s = nxt
        if ph == BASELINE and (flags & F_KNOWN_BASE):
            cred = v_base
        else:
            y = 0.0
            for l in range(L - 1, -1, -1):
                p = path[l]
                T = count[p]
                y = (sum_c[p] / <double>T - coef / sqrt(<double>T)) + gamma * y
            cred = y
        credit += cred
        z = credit - (1.0 - alpha) * <double>kk * v_base
        z_trace[k] = z
        phase_trace[k] = ph
        if z < 0.0:
            viol += 1
    return viol


def run_mdp(int S, int A, int L, const long long[:] level_ptr, const long long[:] succ_ptr,
            const long long[:] succ_idx, const double[:] succ_prob, const double[:] pi,
            const double[:] sig_true, const double[:] mu_r, const double[:] sd_r,
            const double[:] mu_c, const double[:] sd_c, double gamma, double alpha,
            double v_base, double coef, long long K, long long explore_h, int code, int flags,
            const double[:] zr, const double[:] zc, const double[:] ut, const double[:] ua,
            long long[:] count, double[:] sum_r, double[:] sum_r2, double[:] sum_c,
            double[:] z_trace, signed char[:] phase_trace, int[:] act_trace, double[:] true_trace):
    """Run K episodes of one strategy; returns the number of negative budgets."""
    cdef double* m = <double*>malloc(S * sizeof(double))
    cdef double* b = <double*>malloc(S * A * sizeof(double))
    cdef double* wbuf = <double*>malloc(A * sizeof(double))
    cdef double* sig = <double*>malloc(S * A * sizeof(double))
    cdef double* vbuf = <double*>malloc(S * sizeof(double))
    cdef long long* path = <long long*>malloc(L * sizeof(long long))
    cdef long long viol
    cdef int i
    if not (m and b and wbuf and sig and vbuf and path):
        free(m); free(b); free(wbuf); free(sig); free(vbuf); free(path)
        raise MemoryError()
    for i in range(S * A):
        b[i] = 0.0
    try:
        with nogil:
            viol = _run_mdp(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig_true, mu_r, sd_r,
                            mu_c, sd_c, gamma, alpha, v_base, coef, K, explore_h, code, flags, zr, zc, ut,
                            ua, count, sum_r, sum_r2, sum_c, z_trace, phase_trace, act_trace, true_trace,
                            m, b, wbuf, sig, vbuf, path)
    finally:
        free(m); free(b); free(wbuf); free(sig); free(vbuf); free(path)
    return viol


cdef long long _run_bandit(int A, const double[:] pi, const double[:] sig_true, const double[:] mu_r,
                           const double[:] sd_r, const double[:] mu_c, const double[:] sd_c, double alpha,
                           double mu_c0, double coef, long long n, long long explore_h, int flags,
                           const double[:] zr, const double[:] zc, const double[:] ua, long long[:] count,
                           double[:] sum_r, double[:] sum_r2, double[:] sum_c, double[:] z_trace,
                           signed char[:] phase_trace, int[:] act_trace, double* sig, double* wbuf,
                           double* b) noexcept nogil:
    cdef int inject = flags & F_INJECT
    cdef double credit = 0.0, tot, w, z, r, c
    cdef long long viol = 0, l, ll, TJ, v, T
    cdef int a, n_inf, n_sup, J, ph
    for l in range(n):
        ll = l + 1
        if inject:
            for a in range(A):
                sig[a] = sig_true[a]
        else:
            _ucb_sigma(1, A, count, sum_r, sum_r2, coef, sig)
        tot = 0.0
        n_inf = 0
        for a in range(A):
            if pi[a] <= 0.0:
                w = 0.0
            elif sig[a] == INFINITY:
                w = INFINITY
            else:
                w = pi[a] * sig[a]
            wbuf[a] = w
            if w == INFINITY:
                n_inf += 1
            else:
                tot += w
        if n_inf > 0:
            for a in range(A):
                b[a] = 1.0 / n_inf if wbuf[a] == INFINITY else 0.0
        elif tot > 0.0:
            for a in range(A):
                b[a] = wbuf[a] / tot
        else:
            n_sup = 0
            for a in range(A):
                if pi[a] > 0.0:
                    n_sup += 1
            for a in range(A):
                b[a] = 1.0 / n_sup if pi[a] > 0.0 else 0.0
        J = _argmax_ratio(0, A, b, count)
        TJ = count[J]
        if TJ > 0:
            z = credit + (sum_c[J] / <double>TJ - coef / sqrt(<double>TJ)) - (1.0 - alpha) * <double>ll * mu_c0
        else:
            z = credit - (1.0 - alpha) * <double>(ll - 1) * mu_c0
        if z < 0.0:
            a = 0
            ph = BASELINE
            viol += 1
        elif (flags & F_EXPLORE) and ll <= explore_h:
            a = <int>(ua[l] * A)
            if a >= A:
                a = A - 1
            ph = EXPLORE
        else:
            a = J
            ph = TRACK
        v = count[a]
        r = mu_r[a] + sd_r[a] * zr[a * n + v]
        c = mu_c[a] + sd_c[a] * zc[a * n + v]
        count[a] = v + 1
        sum_r[a] += r
        sum_r2[a] += r * r
        sum_c[a] += c
        if ph == BASELINE and (flags & F_KNOWN_BASE):
            credit += mu_c0
        else:
            T = v + 1
            credit += sum_c[a] / <double>T - coef / sqrt(<double>T)
        z_trace[l] = z
        phase_trace[l] = ph
        if flags & F_RECORD:
            act_trace[l] = a
    return viol


def run_bandit(int A, const double[:] pi, const double[:] sig_true, const double[:] mu_r, const double[:] sd_r,
               const double[:] mu_c, const double[:] sd_c, double alpha, double mu_c0, double coef,
               long long n, long long explore_h, int flags, const double[:] zr, const double[:] zc,
               const double[:] ua, long long[:] count, double[:] sum_r, double[:] sum_r2, double[:] sum_c,
               double[:] z_trace, signed char[:] phase_trace, int[:] act_trace):
    """Round-by-round bandit rule with a lookahead budget; returns the number of negative budgets."""
    cdef double* sig = <double*>malloc(A * sizeof(double))
    cdef double* wbuf = <double*>malloc(A * sizeof(double))
    cdef double* b = <double*>malloc(A * sizeof(double))
    cdef long long viol
    if not (sig and wbuf and b):
        free(sig); free(wbuf); free(b)
        raise MemoryError()
    try:
        with nogil:
            viol = _run_bandit(A, pi, sig_true, mu_r, sd_r, mu_c, sd_c, alpha, mu_c0, coef, n, explore_h,
                               flags, zr, zc, ua, count, sum_r, sum_r2, sum_c, z_trace, phase_trace,
                               act_trace, sig, wbuf, b)
    finally:
        free(sig); free(wbuf); free(b)
    return viol
