"""Compare the estimator with the eigenvalue-based baselines.

Two sample sizes are used: more samples than channels, where every method
gives a number, and fewer, where AIC/MDL/FIF have no estimate ("--").
"""
from chemdim.baselines import METHODS, run_baselines
from chemdim.estimator import estimate
from chemdim.synth import SyntheticSpec, make_dataset


def main():
    print("k      n  cd  " + " ".join(f"{m:>8s}" for m in METHODS))
    for n in (1000, 150):
        for k in (3, 6):
            ds = make_dataset(SyntheticSpec(k=k, n=n, p=301, snr=1000.0, seed=1))
            cd = estimate(ds.z, g=12, seed=5, axis=ds.axis).k_cd
            cells = [b.cell for b in run_baselines(ds.z, METHODS)]
            print(f"{k} {n:6d} {cd:3d}  " + " ".join(f"{c:>8s}" for c in cells))


if __name__ == "__main__":
    main()
