import csv
import io
import time

import pytest

from partstore.cli import build_parser, demo_layout, main


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr().out


def test_overhead(capsys):
    code, out = run(["overhead", "--parts", "4", "--peers", "70"], capsys)
    assert code == 0
    assert "10880 bytes" in out and "22800 bytes" in out
    ratio = float(out.strip().splitlines()[-1].split(":")[1])
    assert ratio < 0.5
    _, out = run(["overhead", "--parts", "1", "--peers", "0"], capsys)
    assert "1010 bytes" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["overhead"],
        ["overhead", "--parts", "0"],
        ["simulate", "--t-target", "1.5", "--parts", "2"],
        ["simulate", "--parts", "2", "--q", "3"],
        ["simulate", "--trials", "5"],
        ["simulate", "--parts", "2", "--unique-peers", "maybe"],
        ["simulate", "--parts", "2", "--ts", "yes"],
        ["simulate", "--parts", "2", "--inactive-rate", "-0.1"],
        ["simulate", "--parts", "2", "--figure", "7"],
        ["simulate", "--parts", "2", "--bogus"],
        ["demo", "--inactive", "p9"],
        [],
    ],
)
def test_invalid_flags_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_help_lists_every_flag(capsys):
    for cmd, flags in {
        "simulate": ["--parts", "--q", "--t-target", "--trials", "--seed", "--jobs", "--unique-peers", "--ts", "--inactive-rate", "--figure", "--output", "--crypto"],
        "demo": ["--inactive", "--skip-confirmation", "--crypto", "--chats", "--peers"],
        "overhead": ["--parts", "--peers"],
    }.items():
        with pytest.raises(SystemExit):
            main([cmd, "--help"])
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text, (cmd, flag)


def test_simulate_single_row(capsys):
    code, out = run(["simulate", "--parts", "4", "--q", "4", "--t-target", "0.7", "--trials", "1"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and rows[0]["parts"] == "4" and rows[0]["trials"] == "1"


def test_simulate_figure_to_file(tmp_path, capsys):
    out = tmp_path / "fig4.csv"
    code, text = run(["simulate", "--figure", "4", "--trials", "100", "--seed", "42", "-o", str(out)], capsys)
    assert code == 0 and "wrote 14 rows" in text
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 14
    assert {r["seed"] for r in rows} == {"42"}


def test_simulate_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        run(["simulate", "--figure", "5", "--trials", "300", "--seed", "7", "-o", str(path)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("PARTSTORE_SEED", "1234")
    _, out = run(["simulate", "--parts", "2", "--trials", "10"], capsys)
    assert list(csv.DictReader(io.StringIO(out)))[0]["seed"] == "1234"
    _, out = run(["simulate", "--parts", "2", "--trials", "10", "--seed", "5"], capsys)
    assert list(csv.DictReader(io.StringIO(out)))[0]["seed"] == "5"


def test_simulate_protocol_engine_agrees(capsys):
    _, kernel = run(["simulate", "--parts", "3", "--trials", "20", "--seed", "2"], capsys)
    _, proto = run(["simulate", "--parts", "3", "--trials", "20", "--seed", "2", "--engine", "protocol"], capsys)
    assert kernel == proto


def test_demo_layout_covers_everyone():
    rooms = demo_layout(3, 4)
    assert all(rooms)
    assert sorted({p for r in rooms for p in r}) == [0, 1, 2, 3]


def test_demo_recovers_with_two_inactive(capsys):
    code, out = run(["demo", "--inactive", "p2,p3", "--crypto", "test"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert any(line.startswith("RecoveryFinished") for line in lines)
    assert "storage identical to original: yes" in lines[-1]


def test_demo_all_inactive(capsys):
    code, out = run(["demo", "--inactive", "all", "--crypto", "test"], capsys)
    assert code == 1
    assert "ShareDelivery" not in out.split("starts recovery")[1]
    assert out.strip().endswith("NOT RECOVERED")


def test_demo_skip_confirmation(capsys):
    code, out = run(["demo", "--skip-confirmation", "--crypto", "test"], capsys)
    assert code == 1
    assert out.count("withholds its shares") == 4
    assert "ShareDelivery" not in out.split("starts recovery")[1]


def test_demo_production_all_active(capsys):
    t0 = time.perf_counter()
    code, out = run(["demo"], capsys)
    assert code == 0 and time.perf_counter() - t0 < 10
    assert "storage identical to original: yes" in out


def test_parser_defaults():
    args = build_parser().parse_args(["demo"])
    assert args.crypto == "production" and args.chats == 3 and args.peers == 4
    args = build_parser().parse_args(["simulate", "--parts", "1"])
    assert args.crypto == "test" and args.ts is True and args.unique_peers is False
