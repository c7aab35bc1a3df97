import json
import os
import pathlib

import pytest

import rwscope

FIXTURES = pathlib.Path(os.environ.get("RWSCOPE_FIXTURE_DIR", "build/tests/fixtures"))


def fixture(name):
    path = FIXTURES / name
    if not path.exists():
        pytest.skip(f"missing fixture {path}")
    return str(path)


def test_builtin_tools():
    assert rwscope.builtin_tools() == ["ddisasm", "e9patch", "mctoll", "retrowrite", "zipr"]
    assert "uroboros" in rwscope.tools_without_model()


def test_canonicalize():
    assert rwscope.canonicalize(".note.ABI-tag") == "note.abi_tag"


def test_features_and_size():
    path = fixture("hello_gcc_pie")
    fv = rwscope.features(path)
    assert fv["pi"] is True
    assert fv["strip"] is False
    assert sum(rwscope.size_profile(path).values()) == os.path.getsize(path)


def test_scope_stripped_nopie():
    report = rwscope.scope(fixture("hello_gcc_nopie_stripped"))
    assert set(report["predictions"]) == set(rwscope.builtin_tools())
    assert report["predictions"]["retrowrite"]["outcome"] == "FAIL"
    assert report["features"]["strip"] is True


def test_predict_spot_leaf():
    tree = rwscope.builtin_trees()["ddisasm"]
    json.loads(tree)
    p = rwscope.predict(tree, {"note.abi_tag": False, "interp": True, "rela.plt": True})
    assert (p["outcome"], p["fail"], p["pass"]) == ("PASS", 47, 910)


def test_errors(tmp_path):
    text = tmp_path / "notes.txt"
    text.write_text("plain text\n")
    with pytest.raises(rwscope.MalformedElf):
        rwscope.features(str(text))
    with pytest.raises(rwscope.IoError):
        rwscope.scope(str(tmp_path / "absent"))
    with pytest.raises(rwscope.RwscopeError):
        rwscope.size_profile(str(text))
