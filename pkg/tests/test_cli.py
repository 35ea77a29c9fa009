import json
import textwrap

import pytest

from supremal.cli import main
from supremal.scenario import list_builtins

TINY = textwrap.dedent("""
    version = 1
    seed = 3

    [domain]
    extent = [[-1, 1]]
    h = 0.05

    [supremands.abs]
    profile = "|xi|"

    [fields.line]
    affine = [2.0]

    [[operations]]
    op = "supremal_value"
    label = "line-value"
    supremand = "abs"
    fields = ["line"]
    expect = EXPECT
""")


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_names(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert len(names) >= 4
    assert names == sorted(names) == list_builtins()
    assert {"example-boh", "example-fg-meet"} <= set(names)


@pytest.mark.parametrize("name", list_builtins())
def test_builtins_pass(name, tmp_path, capsys):
    assert main(["run", name, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["ok"] is True


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--out", str(a), "run", "example-fg-meet"]) == 0
    assert main(["run", "example-fg-meet", "--out", str(b)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_passing_and_failing_expectations(tmp_path):
    assert main(["run", write(tmp_path, TINY.replace("EXPECT", "2.0"))]) == 0
    assert main(["run", write(tmp_path, TINY.replace("EXPECT", "1.5"))]) == 1


def test_empty_operation_list_passes(tmp_path, capsys):
    text = TINY.split("[[operations]]")[0]
    assert main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["ok"] is True and report["operations"] == []


@pytest.mark.parametrize("edit, needle", [
    (lambda t: t.replace("version = 1", "version = 7"), "version"),
    (lambda t: t.replace('profile = "|xi|"', 'profile = "|xi| +"'), "abs"),
    (lambda t: t.replace('supremand = "abs"', 'supremand = "missing"'), "missing"),
    (lambda t: t.replace('op = "supremal_value"', 'op = "nonsense"'), "nonsense"),
    (lambda t: t.replace("h = 0.05", "h = [0.05"), "line"),
])
def test_config_errors_exit_2(tmp_path, capsys, edit, needle):
    path = write(tmp_path, edit(TINY.replace("EXPECT", "2.0")))
    assert main(["run", path]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config error:") and needle in err


def test_unknown_builtin_exits_2(capsys):
    assert main(["run", "no-such-scenario"]) == 2


def test_distance_verb(tmp_path, capsys):
    path = write(tmp_path, TINY.replace("EXPECT", "2.0"))
    out = tmp_path / "d"
    for method in ("fast", "oracle"):
        assert main(["distance", path, "--lambda", "0.5", "--source", "0", "--method", method, "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "max 0.475" in text  # d(x, 0) = 0.5 |x|, outermost nodes at +-0.95
    header = (out / "distance.csv").read_text().splitlines()[0]
    assert header == "x1,y1,lambda,d,method"


def test_relax_verb(tmp_path, capsys):
    path = write(tmp_path, TINY.replace("EXPECT", "2.0"))
    assert main(["relax", path, "--field", "line", "--out", str(tmp_path)]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    value = float(line.split("relax ")[1].split()[0])
    assert value == pytest.approx(2.0, abs=1e-3)
    assert (tmp_path / "relax-probes.csv").read_text().startswith("field,mu,R,accepted")


def test_envelope_verb(tmp_path, capsys):
    text = TINY.replace('profile = "|xi|"', 'profile = "min((|xi| - 1)^2, 5)"')
    path = write(tmp_path, text.replace("EXPECT", "2.0"))
    assert main(["envelope", path, "--x", "0", "--out", str(tmp_path)]) == 0
    assert "lowered" in capsys.readouterr().out
    assert (tmp_path / "envelope.csv").read_text().startswith("xi1,f,flc")


def test_represent_example(tmp_path, capsys):
    assert main(["represent", "--example", "boh", "--out", str(tmp_path)]) == 0
    assert any(p.suffix == ".csv" for p in tmp_path.iterdir())


def test_represent_needs_a_source(capsys):
    assert main(["represent"]) == 2
