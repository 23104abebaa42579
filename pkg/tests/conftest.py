import numpy as np
import pytest
from scipy import stats


def chi_square_pvalue(observed, expected_probs, min_expected=5.0):
    """Chi-square goodness-of-fit p-value with small-expectation cells merged."""
    observed = np.asarray(observed, dtype=float)
    total = observed.sum()
    expected = np.asarray(expected_probs, dtype=float) * total
    order = np.argsort(expected)
    obs_sorted, exp_sorted = observed[order], expected[order]
    merged_obs, merged_exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs_sorted, exp_sorted):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            merged_obs.append(acc_o)
            merged_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and merged_exp:
        merged_obs[-1] += acc_o
        merged_exp[-1] += acc_e
    if len(merged_exp) < 2:
        pytest.skip("not enough statistics for a chi-square bin split")
    merged_obs = np.asarray(merged_obs)
    merged_exp = np.asarray(merged_exp)
    merged_exp *= merged_obs.sum() / merged_exp.sum()
    chi2 = ((merged_obs - merged_exp) ** 2 / merged_exp).sum()
    return float(stats.chi2.sf(chi2, len(merged_exp) - 1))
