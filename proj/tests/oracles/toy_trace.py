#!/usr/bin/env python3
"""Hand-enumerable reference for the d=2, M=2 toy head.

Written independently of the C++ pipeline. Prints every intermediate so the
values can be frozen into tests/attention_test.cpp.
"""
import math

T_MAX = 15.0
HALF = 0.45


def quantize(x, levels, lo, hi):
    x = min(max(x, lo), hi)
    step = (hi - lo) / (levels - 1)
    level = round((x - lo) / step)  # Python rounds half to even
    level = min(max(level, 0), levels - 1)
    value = hi if level == levels - 1 else lo + level * step
    return level, value


def stored_voltage(level, levels):
    return HALF if level == levels - 1 else -HALF + level * (2 * HALF) / (levels - 1)


def relu_width(s, s_sat):
    if s <= 0:
        return 0.0
    if s >= s_sat:
        return T_MAX
    return math.floor(T_MAX * (s / s_sat))


def signed_count(s, s_sat):
    sign = 1 if s >= 0 else -1
    width = min(T_MAX, T_MAX * (abs(s) / s_sat))
    return sign * math.floor(width)


def main():
    beta = 1.0
    s_relu, s_signed = 4.0, 6.0
    q = [[10.0, 2.0], [4.0, 9.0]]
    k = [[0.9, 0.3], [-0.2, 0.7]]
    v = [[1.0, -0.6], [-0.5, 0.8]]
    d, slots = 2, 2
    wk = [[0.0] * d for _ in range(slots)]
    wv = [[0.0] * d for _ in range(slots)]
    for t in range(2):
        slot = t % slots
        for r in range(d):
            lk, _ = quantize(-k[t][r], 8, -1.0, 1.0)
            lv, _ = quantize(-v[t][r], 8, -1.0, 1.0)
            wk[slot][r] = stored_voltage(lk, 8)
            wv[slot][r] = stored_voltage(lv, 8)
        widths = [quantize(x, 16, 0.0, 15.0)[1] for x in q[t]]
        charge_qk = [sum(widths[r] * (-beta * wk[c][r]) for r in range(d)) for c in range(slots)]
        pulses = [relu_width(s, s_relu) for s in charge_qk]
        charge_sv = [sum(pulses[c] * (-beta * wv[c][r]) for c in range(slots)) for r in range(d)]
        counts = [signed_count(s, s_signed) for s in charge_sv]
        out = [quantize(float(c), 31, -15.0, 15.0)[1] for c in counts]
        print(f"step {t}")
        print("  wk", [[repr(x) for x in row] for row in wk])
        print("  wv", [[repr(x) for x in row] for row in wv])
        print("  widths", widths)
        print("  charge_qk", [repr(x) for x in charge_qk])
        print("  relu", pulses)
        print("  charge_sv", [repr(x) for x in charge_sv])
        print("  counts", counts)
        print("  out", out)


if __name__ == "__main__":
    main()
