"""Pure-Python reference kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same floating-point operation order, so both backends are bit-identical.
"""
import math


def absorb_stream(count, mean, ssd, values):
    """Fold ``values`` into a single (count, mean, ssd) cell, in order."""
    for x in values:
        x = float(x)
        count += 1
        delta = x - mean
        mean += delta / count
        ssd += delta * (x - mean)
        if ssd < 0.0:
            ssd = 0.0
    return count, mean, ssd


def absorb_masked(counts, means, ssds, losses, groups, mask):
    """Absorb ``losses[i]`` into cell ``groups[i]`` for every i with ``mask[i]``.

    ``counts``, ``means`` and ``ssds`` are updated in place. Indices in
    ``groups`` are 0-based cell offsets.
    """
    for i in range(len(losses)):
        if not mask[i]:
            continue
        g = int(groups[i])
        x = float(losses[i])
        n = int(counts[g]) + 1
        mean = float(means[g])
        delta = x - mean
        mean += delta / n
        ssd = float(ssds[g]) + delta * (x - mean)
        if ssd < 0.0:
            ssd = 0.0
        counts[g] = n
        means[g] = mean
        ssds[g] = ssd


def stddev(count, ssd):
    if count < 2:
        return 0.0
    return math.sqrt(ssd / (count - 1))


def decide(losses, groups, counts, means, ssds, alpha, min_count,
           tau_out, flag_out, cand_out):
    """Threshold every sample against the (unchanged) cell statistics.

    Writes the threshold, the unreliability flag and the candidate weight
    (1.0 for unflagged samples) for each sample.
    """
    for i in range(len(losses)):
        g = int(groups[i])
        n = int(counts[g])
        x = float(losses[i])
        tau = float(means[g]) + alpha * stddev(n, float(ssds[g]))
        tau_out[i] = tau
        if n >= min_count and tau > 0.0 and x > tau:
            flag_out[i] = 1
            cand_out[i] = math.exp(-((x - tau) / tau))
        else:
            flag_out[i] = 0
            cand_out[i] = 1.0
