#!/usr/bin/env python3
"""Build the cleaned benchmark CSVs shipped under data/.

The recipe follows the default AIF360 dataset classes (GermanDataset,
CompasDataset, AdultDataset): same row filters, same kept columns, same
binarised sex/race/age columns. Categorical columns are left as strings;
the Rust loader one-hot encodes them with lexicographically ordered levels.

Raw inputs (any copy works, these are the file names used by the
`fairness` PyPI wheel under fairness/data/raw/):

    german.csv                  UCI Statlog German credit, header row added
    propublica-recidivism.csv   ProPublica compas-scores-two-years.csv
    adult.csv                   UCI Adult, training split (adult.data)

Usage: python3 scripts/prepare_datasets.py RAW_DIR OUT_DIR
"""
import os
import sys

import pandas as pd


def german(raw):
    df = pd.read_csv(os.path.join(raw, "german.csv"))
    male = {"A91", "A93", "A94"}
    df["sex_male"] = df["personal_status"].isin(male).astype(int)
    # protected group: age <= 25 (AIF360 privileged class is age > 25)
    df["age_le_25"] = (df["age"] <= 25).astype(int)
    df["good_credit"] = (df["credit"] == 1).astype(int)
    df = df.drop(columns=["personal_status", "age", "credit"])
    return df


def compas(raw):
    df = pd.read_csv(os.path.join(raw, "propublica-recidivism.csv"))
    df = df[
        (df.days_b_screening_arrest <= 30)
        & (df.days_b_screening_arrest >= -30)
        & (df.is_recid != -1)
        & (df.c_charge_degree != "O")
        & (df.score_text != "N/A")
    ]
    keep = [
        "sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
        "juv_other_count", "priors_count", "c_charge_degree", "c_charge_desc",
        "two_year_recid",
    ]
    df = df[keep].dropna()
    out = pd.DataFrame()
    out["sex_female"] = (df["sex"] == "Female").astype(int)
    out["age"] = df["age"]
    out["age_cat"] = df["age_cat"]
    # protected group: not Caucasian (AIF360 privileged class is Caucasian)
    out["non_caucasian"] = (df["race"] != "Caucasian").astype(int)
    for col in ["juv_fel_count", "juv_misd_count", "juv_other_count", "priors_count"]:
        out[col] = df[col]
    out["c_charge_degree"] = df["c_charge_degree"]
    out["c_charge_desc"] = df["c_charge_desc"]
    out["two_year_recid"] = df["two_year_recid"].astype(int)
    return out


def adult(raw):
    df = pd.read_csv(os.path.join(raw, "adult.csv"), skipinitialspace=True, na_values=["?"])
    df = df.dropna().drop(columns=["fnlwgt"])
    df["race_white"] = (df["race"] == "White").astype(int)
    # protected group: female (AIF360 privileged class is Male)
    df["female"] = (df["sex"] == "Female").astype(int)
    df["high_income"] = df["income-per-year"].str.startswith(">50K").astype(int)
    return df.drop(columns=["race", "sex", "income-per-year"])


def main():
    raw, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    for name, build in [("german", german), ("compas", compas), ("adult", adult)]:
        df = build(raw)
        df.to_csv(os.path.join(out, name + ".csv"), index=False)
        print(f"{name}: {df.shape[0]} rows, {df.shape[1]} columns")


if __name__ == "__main__":
    main()
