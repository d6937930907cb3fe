"""Map the trade-off surface: error rates vs tokens to a decision.

Two knobs matter. Tightening alpha/beta pushes the decision boundaries
apart, which costs tokens. Raising sigma strengthens the watermark,
which buys tokens back but distorts the output distribution more. Both
effects follow closed forms, checked here against Monte Carlo runs.
"""

import numpy as np

from wmtrace import (
    DetectorConfig,
    bounds_from_rates,
    expected_tokens,
    run_detection_trials,
    summarize,
)

from importlib import import_module

walkthrough = import_module("02_detection_walkthrough")


def main():
    print("part 1: decision boundaries as alpha = beta tightens (strength 0.02 nats)")
    print(f"{'alpha':>8} {'b1=b2':>8} {'n1=n2':>7}")
    for rate in (0.1, 0.05, 0.01, 0.001):
        config = DetectorConfig(alpha=rate, beta=rate)
        b1, _ = bounds_from_rates(config)
        n1, _ = expected_tokens(config, 0.02)
        print(f"{rate:>8} {b1:>8.3f} {n1:>7}")

    print()
    print("part 2: stronger watermarks decide faster (alpha = beta = 0.05)")
    config = DetectorConfig(alpha=0.05, beta=0.05)
    trials = 1000
    print(f"{'strength':>9} {'n1_pred':>8} {'median_obs':>11} {'fpr':>6} {'fnr':>6}")
    for target in (0.005, 0.02, 0.08):
        wm, base, strength = walkthrough.build_watermarked_model(target)
        n1, _ = expected_tokens(config, strength)
        length = max(2000, 8 * n1)
        positive = summarize(run_detection_trials(
            wm, wm, base, config, trials=trials, sequence_length=length,
            master_seed=7000 + n1, strength_nats=strength, seed_tag="pos"))
        negative = summarize(run_detection_trials(
            base, wm, base, config, trials=trials, sequence_length=length,
            master_seed=7000 + n1, strength_nats=strength, seed_tag="neg"))
        fpr = negative["rates"]["watermarked"]
        fnr = positive["rates"]["not_watermarked"]
        print(f"{strength:>9.4f} {n1:>8} {positive['median_tokens_to_decision']:>11} "
              f"{fpr:>6.3f} {fnr:>6.3f}")

    print()
    print("both error rates stay near the configured 0.05 regardless of strength;")
    print("the price of a weak watermark is paid in tokens, not in accuracy.")


if __name__ == "__main__":
    main()
