import json
from collections import Counter

import numpy as np

from wardplanner.patients import write_patient_csv
from wardplanner.synthetic import (HOSPITAL_REGION, RANDOM_RANGES, corpus, corpus_instance,
                                   random_instance)

from conftest import DATA


def test_bundled_files_regenerate():
    assert (DATA / "synthetic_patients.csv").read_text() == write_patient_csv(corpus())
    assert json.loads((DATA / "synthetic_instance.json").read_text()) == \
        json.loads(corpus_instance().to_json())


def test_corpus_shape():
    recs = corpus()
    assert len(recs) >= 5000
    assert len({r.specialty for r in recs}) == 6
    assert len({r.hospital for r in recs}) == 4
    assert len({r.region for r in recs}) == 2
    years = Counter(r.admission_date.year for r in recs)
    assert len(years) == 3
    assert all(HOSPITAL_REGION[r.hospital] == r.region for r in recs)


def test_random_instance_ranges():
    rng = np.random.default_rng(0)
    for _ in range(30):
        S, H, K = (int(v) for v in rng.integers(2, 5, 3))
        inst, dem = random_instance(rng, S, H, K)
        lo, hi = RANDOM_RANGES["bed_cost_stage1"]
        assert ((inst.bed_cost_stage1 >= lo) & (inst.bed_cost_stage1 <= hi)).all()
        assert (inst.bed_cost_stage2 >= inst.bed_cost_stage1).all()
        assert (inst.staff_cost_stage2 >= inst.staff_cost_stage1).all()
        assert dem.values.shape == (S, len(inst.regions), K)
        assert abs(dem.probabilities.sum() - 1) < 1e-9
