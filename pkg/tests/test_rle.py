import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from voxedit.rle import RleError, decode_labelmap, encode_labelmap
from voxedit.tensorops import LabelMap, Shape3D


def test_simple_round_trip():
    labels = np.zeros((4, 4, 4), dtype=np.uint8)
    labels[1, 2, :] = 1
    labels[3, 3, 1:3] = 2
    m = LabelMap(Shape3D(4, 4, 4), labels, 2)
    back = decode_labelmap(encode_labelmap(m), num_labels=2)
    assert np.array_equal(back.labels, m.labels)


def test_empty_map_encodes_no_runs():
    m = LabelMap.zeros(Shape3D(4, 4, 4), 3)
    enc = encode_labelmap(m)
    assert enc["labels"] == {}
    back = decode_labelmap(enc, num_labels=3)
    assert not back.labels.any()


@given(
    hnp.arrays(
        dtype=np.uint8,
        shape=st.tuples(
            st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)
        ),
        elements=st.integers(0, 3),
    )
)
@settings(max_examples=120, deadline=None)
def test_encode_decode_identity(labels):
    m = LabelMap(Shape3D(*labels.shape), labels, 3)
    back = decode_labelmap(encode_labelmap(m), num_labels=3)
    assert np.array_equal(back.labels, m.labels)


def test_runs_sorted_within_label():
    labels = np.zeros((2, 2, 8), dtype=np.uint8)
    labels[0, 0, 0:2] = 1
    labels[1, 1, 4:6] = 1
    runs = encode_labelmap(LabelMap(Shape3D(2, 2, 8), labels, 1))["labels"]["1"]
    starts = [r[0] for r in runs]
    assert starts == sorted(starts)


def test_decode_rejects_overlap_within_label():
    d = {"shape": [2, 2, 2], "labels": {"1": [[0, 3], [2, 2]]}}
    with pytest.raises(RleError, match="unsorted or overlap"):
        decode_labelmap(d, num_labels=1)


def test_decode_rejects_overlap_across_labels():
    d = {"shape": [2, 2, 2], "labels": {"1": [[0, 3]], "2": [[2, 2]]}}
    with pytest.raises(RleError, match="overlap"):
        decode_labelmap(d, num_labels=2)


def test_decode_rejects_out_of_bounds():
    d = {"shape": [2, 2, 2], "labels": {"1": [[7, 2]]}}
    with pytest.raises(RleError, match="escapes"):
        decode_labelmap(d, num_labels=1)


def test_decode_rejects_bad_run_shape():
    d = {"shape": [2, 2, 2], "labels": {"1": [[1]]}}
    with pytest.raises(RleError, match="pair"):
        decode_labelmap(d, num_labels=1)


def test_decode_rejects_label_above_declared():
    d = {"shape": [2, 2, 2], "labels": {"5": [[0, 1]]}}
    with pytest.raises(RleError, match="exceeds"):
        decode_labelmap(d, num_labels=2)


def test_decode_rejects_nonpositive_length():
    d = {"shape": [2, 2, 2], "labels": {"1": [[0, 0]]}}
    with pytest.raises(RleError, match="length"):
        decode_labelmap(d, num_labels=1)
