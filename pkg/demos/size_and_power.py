"""Small Monte-Carlo study of size and power, l2 versus l-infinity.

Runs the experiment harness with 200 replicates per cell and 1000
threshold draws, so it finishes in about a minute. The first block reports
the empirical size at alpha=0.05 under the two calibration modes. The
second reports power of the pooled-squares and coordinate-maximum
detectors as the number of shifted series shrinks, for two jump sizes.

    python3 demos/size_and_power.py
"""

from hdmosum.dgp import ErrorModel, ExperimentConfig, run_power_experiment, run_size_experiment

REPS = 200
MC_REPS = 1000

print("size at alpha = 0.05 (n=200, bn=30, p=50)")
for model in (ErrorModel("iid"), ErrorModel("ma_inf", "student", beta=2.0)):
    for calibration in ("limit", "panel"):
        cfg = ExperimentConfig(model=model, reps=REPS, mc_reps=MC_REPS, calibration=calibration)
        size = run_size_experiment(cfg).metrics["size"]
        print(f"  {model.label:14s} {calibration:6s} thresholds: {size:.3f}")

print("\npower (n=100, bn=20, p=100, MA t9 noise, break at t=50)")
cfg = ExperimentConfig(model=ErrorModel("ma_inf", "student", beta=1.5), n=100, p=100, bn=20,
                       reps=REPS, mc_reps=MC_REPS, jumps=(1.0, 4.0), n_jump=(100, 10, 1), tau=50)
for row in run_power_experiment(cfg).table:
    print(f"  jump {row['jump']:g}, {row['n_jump']:3d} series: "
          f"l2 {row['power_l2']:.3f}  linf {row['power_linf']:.3f}")
