import json
import textwrap

import pytest

from framepost import framearc
from framepost.cli import load_config, main
from framepost.plotdoc import read

pytestmark = pytest.mark.filterwarnings("ignore::framepost.plotdoc.RestoreWarning")

GOOD = """
[run]
dataset = data
output = out
pinned_timestamp = 2024-01-01T00:00:00Z

[calc peak]
type = peak_displacement

[calc chan]
type = channel_distortion
ix = 1
iy = 0

[calc rms]
type = rms_velocity

[calc norm]
type = normalized_peak

[plot peak_layer]
calc = peak
type = layer
slice = z:3
title = Peak displacement, top layer

[plot peak_max]
calc = peak
type = layer
reduce = z
clim = 0, 0.1

[plot channel]
calc = chan
type = channel

[plot rms]
calc = rms
type = time
line_width = 2

[plot spread]
calc = chan
type = waterfall
result = dx
"""


@pytest.fixture
def workspace(tmp_path):
    assert main(["gen", "--out", str(tmp_path / "data"), "--nx", "2", "--ny", "2", "--nz", "4",
                 "--frames", "24", "--frames-per-file", "8", "--amplitude", "0.05"]) == 0
    return tmp_path


def write(ws, text, name="run.ini"):
    p = ws / name
    p.write_text(textwrap.dedent(text))
    return p


def report(ws, out="out"):
    return json.loads((ws / out / "run_report.json").read_text())


def test_gen_usage_errors(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path), "--frames", "0"]) == 2
    assert main(["gen", "--out", str(tmp_path), "--frames-per-file", "0"]) == 2
    assert main(["gen"]) == 2
    assert main(["frobnicate"]) == 2
    assert main([]) == 2


def test_successful_run(workspace, capsys):
    cfg = write(workspace, GOOD)
    assert main(["run", str(cfg)]) == 0
    rep = report(workspace)
    assert rep["passes"] == 2 and rep["bytes_read"] == rep["planned_bytes"]
    assert rep["frames_decoded"] == 48 and rep["decodes_per_pass"] == [24, 24]
    assert all(c["status"] == "ok" for c in rep["calcs"].values())
    assert sorted(rep["plots"]) == ["channel", "peak_layer", "peak_max", "rms", "spread"]
    assert "timings" in rep
    for name in rep["plots"]:
        doc = workspace / "out" / f"{name}.plotdoc"
        assert main(["render", str(doc), str(workspace / f"{name}.svg")]) == 0
        assert (workspace / f"{name}.svg").read_bytes().startswith(b"<?xml")


def test_plot_requests_shape_data(workspace):
    assert main(["run", str(write(workspace, GOOD))]) == 0
    from framepost.plotdoc import restore

    layer = restore(workspace / "out" / "peak_layer.plotdoc")
    assert layer.args["data"].shape == (2, 2, 1, 1)
    assert layer.presentation.title == "Peak displacement, top layer"
    assert restore(workspace / "out" / "peak_max.plotdoc").presentation.limits("c") == (0.0, 0.1)
    assert restore(workspace / "out" / "rms.plotdoc").args["dt"] == 0.01
    tr = read(workspace / "out" / "rms.plotdoc").header["traceability"]
    assert tr["calc_id"] == "rms" and len(tr["inputs"]) == 3


def test_dry_run_reads_no_frame_bytes(workspace, monkeypatch, capsys):
    def forbidden(*a, **k):
        raise AssertionError("dry run decoded frames")

    monkeypatch.setattr(framearc, "iter_frames", forbidden)
    monkeypatch.setattr("framepost.engine.iter_frames", forbidden)
    assert main(["run", str(write(workspace, GOOD)), "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("2 pass(es)") and "phase 1 of norm" in out
    rep = report(workspace)
    assert rep["dry_run"] and rep["bytes_read"] == 0 and rep["frames_decoded"] == 0
    assert not list((workspace / "out").glob("*.plotdoc"))


def test_injected_failure_exits_1(workspace, capsys):
    cfg = write(workspace, GOOD + """
[calc boom]
type = fault_injection
fail_at_frame = 5

[plot boom]
calc = boom
type = time
""")
    assert main(["run", str(cfg)]) == 1
    rep = report(workspace)
    assert rep["calcs"]["boom"]["status"] == "failed"
    assert rep["calcs"]["boom"]["failure"]["frame_index"] == 5
    assert rep["plots"]["boom"]["status"] == "skipped"
    assert rep["calcs"]["peak"]["status"] == "ok" and rep["plots"]["peak_layer"]["status"] == "ok"
    assert "failed (phase 0, frame 5)" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    "[calc a]\ntype = rms_velocity\n",
    "[run]\ndataset = data\n",
    "[run]\ndataset = data\noutput = out\ncolour = red\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = no_such_calc\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\n",
    "[run]\ndataset = data\noutput = out\n[widget a]\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = rms_velocity\n[plot p]\ncalc = b\ntype = time\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = rms_velocity\n[plot p]\ncalc = a\ntype = pie\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = rms_velocity\n[plot p]\ncalc = a\ntype = time\nylim = 3, 1\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = rms_velocity\n[plot p]\ncalc = a\ntype = time\ncolour = red\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = rms_velocity\n[plot p]\ncalc = a\ntype = time\nreduce = w\n",
    "[run]\ndataset = data\noutput = out\nthreads = many\n",
    "[run]\ndataset = data\noutput = out\n[calc a]\ntype = channel_distortion\nrow = 3\n",
    "not an ini file",
])
def test_bad_config_exits_2(workspace, text, capsys):
    assert main(["run", str(write(workspace, text))]) == 2
    assert "error" in capsys.readouterr().err
    assert not (workspace / "out").exists()


def test_missing_config_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == 2


def test_corrupt_dataset_exits_1(workspace, capsys):
    victim = sorted((workspace / "data").glob("*.faf"))[1]
    victim.write_bytes(victim.read_bytes()[:-7])
    assert main(["run", str(write(workspace, GOOD))]) == 1
    assert "expected" in capsys.readouterr().err


def test_threads_and_repeat_runs_are_identical(workspace):
    text = GOOD.replace("output = out", "output = {out}")
    outs = []
    for i, threads in enumerate(["1", "4", "1"]):
        cfg = write(workspace, text.format(out=f"out{i}"), f"run{i}.ini")
        assert main(["run", str(cfg), "--threads", threads, "--no-timings"]) == 0
        outs.append(workspace / f"out{i}")
    first = outs[0]
    for other in outs[1:]:
        assert (other / "run_report.json").read_bytes() == (first / "run_report.json").read_bytes()
        for doc in sorted(first.glob("*.plotdoc")):
            assert (other / doc.name).read_bytes() == doc.read_bytes()
            a, b = first / f"{doc.stem}.svg", other / f"{doc.stem}.svg"
            assert main(["render", str(doc), str(a)]) == 0
            assert main(["render", str(other / doc.name), str(b)]) == 0
            assert a.read_bytes() == b.read_bytes()


def test_batch_edit(workspace, capsys):
    assert main(["run", str(write(workspace, GOOD))]) == 0
    docs = [workspace / "out" / f"{n}.plotdoc" for n in ("rms", "channel", "spread")]
    before = [read(d).payload_sha256() for d in docs]
    originals = [d.read_bytes() for d in docs]
    assert main(["edit", *map(str, docs), "--line-width", "2.0", "--ylim=-1,1", "--title", "T"]) == 0
    assert [read(d).payload_sha256() for d in docs] == before
    assert [d.with_name(d.name + ".bak").read_bytes() for d in docs] == originals
    for d in docs:
        pres = read(d).header["presentation"]
        assert pres["line_width"] == 2.0 and pres["axis_limits"]["y"] == [-1.0, 1.0]
    assert capsys.readouterr().out.count("unchanged") == 3


@pytest.mark.parametrize("flags", [[], ["--ylim", "1,1"], ["--xlim", "a,b"], ["--colormap", "jet"],
                                   ["--line-width", "-1"]])
def test_edit_usage_errors(workspace, flags):
    assert main(["run", str(write(workspace, GOOD))]) == 0
    doc = workspace / "out" / "rms.plotdoc"
    original = doc.read_bytes()
    assert main(["edit", str(doc), *flags]) == 2
    assert doc.read_bytes() == original


def test_edit_missing_document_exits_1(tmp_path):
    assert main(["edit", str(tmp_path / "gone.plotdoc"), "--title", "x"]) == 1


def test_render_with_overrides_and_info(workspace, capsys):
    assert main(["run", str(write(workspace, GOOD))]) == 0
    doc = workspace / "out" / "peak_layer.plotdoc"
    before = doc.read_bytes()
    assert main(["render", str(doc), str(workspace / "a.svg"), "--colormap", "grey", "--no-grid"]) == 0
    assert doc.read_bytes() == before
    assert main(["render", str(doc), str(workspace / "b.svg"), "--clim", "2,1"]) == 2
    capsys.readouterr()
    assert main(["info", str(doc)]) == 0
    out = capsys.readouterr().out
    assert "plot_type: layer" in out and "payload_sha256:" in out and '"calc_id": "peak"' in out


def test_config_paths_are_relative_to_the_file(workspace):
    sub = workspace / "conf"
    sub.mkdir()
    cfg = load_config(write(sub, GOOD.replace("dataset = data", "dataset = ../data")))
    assert cfg.datasets == [sub / "../data"] and cfg.output == sub / "out"
    assert [c.calc_id for c in cfg.calcs] == ["peak", "chan", "rms", "norm"]
    assert cfg.calcs[1].params == {"ix": 1, "iy": 0}


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == "0.1.0"


def test_default_titles_record_slices_and_reductions(workspace):
    assert main(["run", str(write(workspace, GOOD))]) == 0
    from framepost.plotdoc import restore

    titles = {n: restore(workspace / "out" / f"{n}.plotdoc").presentation.title
              for n in ("peak_layer", "peak_max", "channel", "spread")}
    assert titles == {
        "peak_layer": "Peak displacement, top layer",
        "peak_max": "peak_displacement, max over z",
        "channel": "dx and dy",
        "spread": "dx",
    }
