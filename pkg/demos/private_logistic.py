"""Train private logistic regression on synthetic data across privacy levels.

Shows how accuracy and calibrated noise move with epsilon. The accounting
covers the whole released model, output noise included.

Run: python3 demos/private_logistic.py
"""
import numpy as np

from objpert import cli, data

rng = np.random.default_rng(0)
X = rng.normal(size=(5000, 8))
w = rng.normal(size=8)
y = (rng.uniform(size=5000) < 1 / (1 + np.exp(-3 * X @ w / np.linalg.norm(w)))).astype(float)
ds = data.from_arrays(X, y, "binary_classification")

print(f"{'eps':>5} {'sigma':>8} {'accuracy':>9} {'majority':>9}")
for eps in (0.1, 0.5, 1.0, 2.0, 4.0, 8.0):
    _, report = cli.train(ds, "logistic", eps, 1e-5, lam=5.0, clip=1.0, tau=1e-4,
                          sigma_out=0.1, optimizer="agd", seed=1, test_fraction=0.2)
    t = report["test"]
    print(f"{eps:5.1f} {report['privacy']['sigma']:8.2f} {t['accuracy']:9.3f} {t['majority_baseline']:9.3f}")
