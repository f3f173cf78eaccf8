#!/usr/bin/env python3
"""Regenerates the bundled tabular fixtures under data/.

The diabetes fixture mimics the marginals of the PIMA Indians diabetes table
(800 rows, 7 features). The loan fixture is a synthetic credit-risk table with
one categorical column. Both are deterministic for a given seed.
"""
import argparse
import pathlib

import numpy as np


def diabetes(rng, n=800):
    age = np.clip(rng.gamma(2.2, 7.5, n) + 21, 21, 81).round()
    preg = np.clip(rng.poisson(1.0 + (age - 21) / 12.0), 0, 17)
    bmi = np.clip(rng.normal(32.0, 7.0, n), 18.2, 67.1).round(1)
    skin = np.clip(0.9 * (bmi - 32) + rng.normal(29, 9, n), 7, 99).round()
    glucose = np.clip(rng.normal(121, 31, n) + 0.3 * (age - 33), 44, 199).round()
    insulin = np.clip(rng.lognormal(4.7, 0.6, n) + 1.1 * (glucose - 120), 14, 846).round()
    bp = np.clip(rng.normal(72, 12, n) + 0.2 * (age - 33), 24, 122).round()
    z = -8.4 + 0.035 * glucose + 0.09 * bmi + 0.12 * preg + 0.015 * age + 0.002 * insulin
    outcome = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(int)
    cols = {
        "Pregnancies": preg.astype(int), "Glucose": glucose.astype(int),
        "BloodPressure": bp.astype(int), "SkinThickness": skin.astype(int),
        "Insulin": insulin.astype(int), "BMI": bmi, "Age": age.astype(int),
        "Outcome": outcome,
    }
    return cols


def loan(rng, n=1000):
    income = np.clip(rng.lognormal(10.8, 0.5, n), 8000, 400000).round(-2)
    debt_ratio = np.clip(rng.beta(2, 5, n), 0, 1).round(3)
    years = np.clip(rng.exponential(6, n), 0, 40).round()
    delinq = rng.poisson(0.4, n)
    util = np.clip(rng.beta(2, 3, n) * 100, 0, 100).round(1)
    accounts = np.clip(rng.poisson(9, n), 1, 40)
    housing = rng.choice(["mortgage", "own", "rent"], n, p=[0.45, 0.15, 0.40])
    z = -1.0 + 3.0 * debt_ratio + 0.9 * delinq + 0.02 * util - 0.06 * years \
        - 0.000004 * income + 0.4 * (housing == "rent")
    default = np.where(rng.random(n) < 1 / (1 + np.exp(-z)), "Default", "Repaid")
    return {
        "Income": income.astype(int), "DebtRatio": debt_ratio,
        "YearsEmployed": years.astype(int), "Delinquencies": delinq,
        "Utilization": util, "OpenAccounts": accounts, "Housing": housing,
        "Status": default,
    }


def write(path, cols):
    names = list(cols)
    n = len(cols[names[0]])
    with open(path, "w") as out:
        out.write(",".join(names) + "\n")
        for i in range(n):
            out.write(",".join(str(cols[c][i]) for c in names) + "\n")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(pathlib.Path(__file__).parent.parent / "data"))
    parser.add_argument("--seed", type=int, default=20210831)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    out = pathlib.Path(args.out)
    write(out / "diabetes.csv", diabetes(rng))
    write(out / "loan.csv", loan(rng))


if __name__ == "__main__":
    main()
