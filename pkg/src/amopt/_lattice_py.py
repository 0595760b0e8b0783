"""Pure numpy roll-back kernel, used when the compiled extension is absent."""
import numpy as np


def _payoff(s, strike, is_call):
    return np.maximum(s - strike, 0.0) if is_call else np.maximum(strike - s, 0.0)


def rollback(spot, strike, u, p, disc, steps, is_call, american):
    n = int(steps)
    upow = np.power(float(u), np.arange(-n, n + 1, dtype=np.float64))
    q = 1.0 - p
    vals = _payoff(spot * upow[2 * n - 2 * np.arange(n + 1)], strike, is_call)
    for t in range(n - 1, -1, -1):
        vals = disc * (p * vals[:-1] + q * vals[1:])
        if american:
            s = spot * upow[n + t - 2 * np.arange(t + 1)]
            vals = np.maximum(vals, _payoff(s, strike, is_call))
    return float(vals[0])


def rollback_many(spot, strike, u, p, disc, steps, is_call, american):
    out = np.empty(len(spot), dtype=np.float64)
    for j in range(len(spot)):
        out[j] = rollback(spot[j], strike[j], u[j], p[j], disc[j], steps[j], is_call, american)
    return out
