"""Pure-Python simulation loops.

Line-for-line twin of ``_kernels.pyx``: same loop order and the same
floating-point expression order, so both backends produce bit-identical
outputs. Used when the compiled extension is unavailable.
"""
import math

INF = math.inf

BASELINE, EXPLORE, TRACK, ONPOLICY = 0, 1, 2, 3
K_ONPOLICY, K_BASELINE, K_ORACLE, K_SAFE_ORACLE, K_SAVER = 0, 1, 2, 3, 4
F_INJECT, F_KNOWN_BASE, F_GATE, F_RECORD, F_TRUE, F_EXPLORE = 1, 2, 4, 8, 16, 32


def _allocate(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig, gamma, m, b, wbuf):
    g2 = gamma * gamma
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
                    if sg == INF or spread == INF:
                        w = INF
                    else:
                        w = math.sqrt(p * p * (sg * sg + g2 * spread))
                wbuf[a] = w
                if w == INF:
                    n_inf += 1
                else:
                    tot += w
            if n_inf > 0:
                m[s] = INF
                for a in range(A):
                    b[s * A + a] = 1.0 / n_inf if wbuf[a] == INF else 0.0
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


def _argmax_ratio(s, A, b, count):
    best = -1.0
    choice = 0
    for a in range(A):
        T = count[s * A + a]
        ratio = INF if T == 0 else b[s * A + a] / T
        if ratio > best:
            best = ratio
            choice = a
    return choice


def _ucb_sigma(S, A, count, sum_r, sum_r2, coef, sig):
    for p in range(S * A):
        T = count[p]
        if T == 0:
            sig[p] = INF
        else:
            mean = sum_r[p] / T
            var = sum_r2[p] / T - mean * mean
            if var < 0.0:
                var = 0.0
            sig[p] = math.sqrt(var) + coef / math.sqrt(T)


def _behavior_cost(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, mu_c, gamma, phase, pi, b, count, vbuf):
    # exact cost value of the episode's behavior policy from the root
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


def run_mdp(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig_true, mu_r, sd_r, mu_c, sd_c,
            gamma, alpha, v_base, coef, K, explore_h, code, flags, zr, zc, ut, ua,
            count, sum_r, sum_r2, sum_c, z_trace, phase_trace, act_trace, true_trace):
    """Run K episodes of one strategy; returns the number of negative budgets."""
    m = [0.0] * S
    b = [0.0] * (S * A)
    wbuf = [0.0] * A
    sig = [0.0] * (S * A)
    vbuf = [0.0] * S
    path = [0] * L
    inject = flags & F_INJECT
    if code == K_ORACLE or code == K_SAFE_ORACLE or (code == K_SAVER and inject):
        _allocate(S, A, L, level_ptr, succ_ptr, succ_idx, succ_prob, pi, sig_true, gamma, m, b, wbuf)
    credit = 0.0
    true_sum = 0.0
    z = 0.0
    viol = 0
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
            true_trace[k] = true_sum - (1.0 - alpha) * kk * v_base
        s = 0
        for l in range(L):
            if ph == BASELINE:
                a = 0
            elif ph == TRACK:
                a = _argmax_ratio(s, A, b, count)
            elif ph == EXPLORE:
                a = int(ua[k * L + l] * A)
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
                act_trace[k * L + l] = p
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
                y = (sum_c[p] / T - coef / math.sqrt(T)) + gamma * y
            cred = y
        credit += cred
        z = credit - (1.0 - alpha) * kk * v_base
        z_trace[k] = z
        phase_trace[k] = ph
        if z < 0.0:
            viol += 1
    return viol


def run_bandit(A, pi, sig_true, mu_r, sd_r, mu_c, sd_c, alpha, mu_c0, coef, n, explore_h, flags,
               zr, zc, ua, count, sum_r, sum_r2, sum_c, z_trace, phase_trace, act_trace):
    """Round-by-round bandit rule with a lookahead budget; returns the number of negative budgets."""
    sig = [0.0] * A
    wbuf = [0.0] * A
    b = [0.0] * A
    inject = flags & F_INJECT
    credit = 0.0
    viol = 0
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
            elif sig[a] == INF:
                w = INF
            else:
                w = pi[a] * sig[a]
            wbuf[a] = w
            if w == INF:
                n_inf += 1
            else:
                tot += w
        if n_inf > 0:
            for a in range(A):
                b[a] = 1.0 / n_inf if wbuf[a] == INF else 0.0
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
            z = credit + (sum_c[J] / TJ - coef / math.sqrt(TJ)) - (1.0 - alpha) * ll * mu_c0
        else:
            z = credit - (1.0 - alpha) * (ll - 1) * mu_c0
        if z < 0.0:
            a = 0
            ph = BASELINE
            viol += 1
        elif (flags & F_EXPLORE) and ll <= explore_h:
            a = int(ua[l] * A)
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
            credit += sum_c[a] / T - coef / math.sqrt(T)
        z_trace[l] = z
        phase_trace[l] = ph
        if flags & F_RECORD:
            act_trace[l] = a
    return viol
