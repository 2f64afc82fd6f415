"""Preprocessing recipes for the Adult income and COMPAS recidivism data.

Each recipe turns the public raw file into a table whose columns are the
block names of a fixed schema and whose cells are category labels, ready for
:func:`maxent_debias.io.frame_to_dataset`.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .domain import DomainSchema

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

AGE_DECADES = ["10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70+"]
EDUCATION_YEARS = ["<6", "6", "7", "8", "9", "10", "11", "12", ">12"]

ADULT_SCHEMA = {
    "tau_group": 0,
    "blocks": [
        {"name": "sex", "kind": "bit", "role": "protected", "categories": ["Male", "Female"]},
        {"name": "race", "kind": "bit", "categories": ["White", "Non-White"]},
        {"name": "age", "kind": "onehot", "categories": AGE_DECADES},
        {"name": "education_years", "kind": "onehot", "categories": EDUCATION_YEARS},
        {"name": "income", "kind": "bit", "role": "label", "categories": ["<=50K", ">50K"]},
    ],
}

COMPAS_SMALL_SCHEMA = {
    "tau_group": 0,
    "blocks": [
        {"name": "sex", "kind": "bit", "role": "protected", "categories": ["Male", "Female"]},
        {"name": "race", "kind": "bit", "categories": ["African-American", "Caucasian"]},
        {"name": "age", "kind": "onehot", "categories": ["<25", "25-45", ">45"]},
        {"name": "priors", "kind": "onehot", "categories": ["0", "1-3", ">3"]},
        {"name": "charge_degree", "kind": "bit", "categories": ["F", "M"]},
        {"name": "two_year_recid", "kind": "bit", "role": "label", "categories": ["0", "1"]},
    ],
}


def adult_schema() -> DomainSchema:
    return DomainSchema.from_dict(ADULT_SCHEMA)


def compas_small_schema() -> DomainSchema:
    return DomainSchema.from_dict(COMPAS_SMALL_SCHEMA)


def prepare_adult(*paths: str | Path) -> pd.DataFrame:
    """Adult census records reduced to sex, race, age decade, education years and income.

    Several files (the train and test splits) are concatenated in order.
    Rows with missing values in unused columns are kept.
    """
    if not paths:
        raise ValueError("no input files")
    raw = pd.concat(
        [
            pd.read_csv(
                p, header=None, names=ADULT_COLUMNS, skipinitialspace=True,
                dtype=str, keep_default_na=False, comment="|",
            )
            for p in paths
        ],
        ignore_index=True,
    )
    raw = raw[raw["income"].str.len() > 0]
    age = raw["age"].astype(int)
    edu = raw["education_num"].astype(int)
    out = pd.DataFrame({
        "sex": raw["sex"].str.strip(),
        "race": np.where(raw["race"].str.strip() == "White", "White", "Non-White"),
        "age": [AGE_DECADES[min(max(a // 10 - 1, 0), 6)] for a in age],
        "education_years": ["<6" if e < 6 else ">12" if e > 12 else str(e) for e in edu],
        # the test split writes labels with a trailing period
        "income": raw["income"].str.strip().str.rstrip("."),
    })
    return out.reset_index(drop=True)


def _bucket_priors(n: int) -> str:
    return "0" if n == 0 else "1-3" if n <= 3 else ">3"


def prepare_compas_small(path: str | Path) -> pd.DataFrame:
    """Two-year recidivism records with the usual screening filters.

    Keeps rows whose screening happened within 30 days of arrest, with a known
    recidivism outcome, a felony or misdemeanour charge and a scored
    assessment; only African-American and Caucasian defendants are kept.
    """
    raw = pd.read_csv(path)
    keep = (
        raw["days_b_screening_arrest"].between(-30, 30)
        & (raw["is_recid"] != -1)
        & (raw["c_charge_degree"] != "O")
        & (raw["score_text"].fillna("N/A") != "N/A")
        & raw["race"].isin(["African-American", "Caucasian"])
    )
    raw = raw[keep]
    age_map = {"Less than 25": "<25", "25 - 45": "25-45", "Greater than 45": ">45"}
    out = pd.DataFrame({
        "sex": raw["sex"],
        "race": raw["race"],
        "age": raw["age_cat"].map(age_map),
        "priors": [_bucket_priors(int(n)) for n in raw["priors_count"]],
        "charge_degree": raw["c_charge_degree"],
        "two_year_recid": raw["two_year_recid"].astype(int).astype(str),
    })
    return out.reset_index(drop=True)
