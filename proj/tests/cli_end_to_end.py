"""End-to-end run of the command-line tool on a generated fixture.

Checks exit codes, config-file handling, report files, JSON schema
conformance and the report re-emit round trip.
"""

import argparse
import csv
import json
import math
import random
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

failures = []


def expect(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(*args, cwd):
    return subprocess.run([str(a) for a in args], cwd=cwd, capture_output=True, text=True)


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0][1:], {r[0]: [math.nan if v == "NA" else float(v) for v in r[1:]] for r in rows[1:]}


def tokenizer_parity(cli, tmp, corpus):
    """Token ids agree with the reference GPT-2 tokenizer on the fixture vocab."""
    try:
        from transformers import GPT2Tokenizer
    except ImportError:
        print("skip tokenizer parity (transformers not installed)")
        return
    ref = GPT2Tokenizer(str(tmp / "fx/vocab.json"), str(tmp / "fx/merges.txt"))
    rng = random.Random(5)
    alphabet = list("abcdefghijklmnopqrstuvwxyz ABCXYZ0123456789.,;!?'\"-\t\n") + list("éüß日本語😀") + ["'s", "'ll", "  "]
    texts = corpus.read_text().splitlines()[:200]
    texts += ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 30))) for _ in range(800)]
    r = subprocess.run([str(cli), "tokenize", "--vocab", "fx/vocab.json", "--merges", "fx/merges.txt", "--json"],
                       cwd=tmp, input="".join(json.dumps(t) + "\n" for t in texts), capture_output=True, text=True)
    ours = [[int(x) for x in line.split()] for line in r.stdout.splitlines()]
    mismatches = [t for t, ids in zip(texts, ours) if ids != ref.encode(t)]
    expect(r.returncode == 0 and len(ours) == len(texts) and not mismatches,
           f"tokenizer parity with reference on {len(texts)} texts" + (f", first mismatch {mismatches[0]!r}" if mismatches else ""))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--fixture", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--corpus", required=True)
    args = ap.parse_args()
    for name in ("cli", "fixture", "schema", "corpus"):
        setattr(args, name, Path(getattr(args, name)).resolve())
    validator = jsonschema.Draft202012Validator(json.loads(Path(args.schema).read_text()))

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        r = run(args.fixture, "--dir", "fx", "--layers", "3", "--heads", "2", "--merges", "150", cwd=tmp)
        expect(r.returncode == 0, "fixture generated")
        model = ["--weights", "fx/model.gptw", "--vocab", "fx/vocab.json", "--merges", "fx/merges.txt"]

        # Shallow models.
        for kind, extra in [("ngram", []), ("lstm", ["--epochs", "1", "--embed", "16", "--hidden", "16"])]:
            r = run(args.cli, "slm", "train", "--kind", kind, "--corpus", args.corpus, "--out", f"{kind}.json",
                    *extra, cwd=tmp)
            expect(r.returncode == 0 and (tmp / f"{kind}.json").exists(), f"slm train {kind}")

        # Probes.
        reports = {}
        for probe, extra in [("ffn", []), ("attn", ["--measures", "TRT", "GD"]),
                             ("prob", ["--slm", "ngram.json", "lstm.json", "missing.json", "--dump-pairs"])]:
            r = run(args.cli, "probe", probe, *model, "--gaze", "fx/gaze.tsv", "--out", f"out_{probe}", *extra,
                    cwd=tmp)
            out = tmp / f"out_{probe}"
            expect(r.returncode == 0, f"probe {probe} exits 0 ({r.stderr.strip()[:200]})")
            doc = json.loads((out / f"{probe}_report.json").read_text())
            errors = sorted(validator.iter_errors(doc), key=str)
            expect(not errors, f"{probe} report matches schema" + (f": {errors[0].message}" if errors else ""))
            reports[probe] = (out, doc)

        out, doc = reports["ffn"]
        expect(len(doc["tables"]) == 3 and all(t["columns"] == ["L1", "L2", "L3"] for t in doc["tables"]),
               "ffn: one table per scope, one column per layer")
        expect([g["group"] for g in doc["groups"][:3]] == ["bottom", "middle", "upper"], "ffn: layer groups")
        cols, rows = read_csv(out / "ffn_nr.csv")
        cell = doc["tables"][0]["cells"][0][0]["coefficient"]
        expect(cols == ["L1", "L2", "L3"] and rows["GD"][0] == cell, "ffn: CSV agrees with JSON")

        out, doc = reports["attn"]
        expect(len(doc["tables"]) == 6, "attn: a table per scope and measure")
        svg = (out / "attn_nr_trt.svg").read_text()
        expect(svg.count('class="cell') == 3 * 2, "attn: heatmap has one cell per layer/head")

        out, doc = reports["prob"]
        expect(doc["tables"][0]["rows"] == ["gpt2", "ngram", "lstm"], "prob: rows are models")
        expect(list(doc["skipped_models"]) == ["missing"], "prob: unloadable model skipped with diagnostic")
        expect((out / "prob_pairs.tsv").exists(), "prob: pairs dumped")

        # Config file; flags override it.
        (tmp / "run.cfg").write_text(
            "# probe settings\nweights = fx/model.gptw\nvocab = fx/vocab.json\nmerges = fx/merges.txt\n"
            "gaze = fx/gaze.tsv\nmetric = kendall\nmeasures = TRT,FFD\ntask = nr\n")
        r = run(args.cli, "probe", "ffn", "--config", "run.cfg", "--metric", "pearson", "--out", "cfg", cwd=tmp)
        expect(r.returncode == 0, "config file accepted")
        if r.returncode == 0:
            cfg = json.loads((tmp / "cfg/ffn_report.json").read_text())["config"]
            expect(cfg["metric"] == "pearson" and cfg["measures"] == ["TRT", "FFD"] and cfg["task"] == "nr",
                   "config values applied, flag wins")
        (tmp / "bad.cfg").write_text("colour = blue\n")
        r = run(args.cli, "probe", "ffn", "--config", "bad.cfg", "--gaze", "fx/gaze.tsv", cwd=tmp)
        expect(r.returncode == 1, "unknown config key is a usage error")

        # Determinism across runs and thread counts (same config, so same --out).
        first = (tmp / "out_ffn/ffn_report.json").read_bytes()
        r = run(args.cli, "probe", "ffn", *model, "--gaze", "fx/gaze.tsv", "--out", "out_ffn", "--threads", "3",
                cwd=tmp)
        expect(r.returncode == 0 and (tmp / "out_ffn/ffn_report.json").read_bytes() == first,
               "repeat run gives byte-identical JSON")

        # Report re-emit.
        r = run(args.cli, "report", "out_attn/attn_report.json", "--out", "re", "--format", "csv,json,svg", cwd=tmp)
        expect(r.returncode == 0, "report subcommand exits 0")
        expect((tmp / "re/attn_report.json").read_bytes() == (tmp / "out_attn/attn_report.json").read_bytes(),
               "report round trip reproduces the JSON")
        expect((tmp / "re/attn_nr_trt.csv").read_bytes() == (tmp / "out_attn/attn_nr_trt.csv").read_bytes(),
               "report round trip reproduces the CSV")

        tokenizer_parity(args.cli, tmp, args.corpus)

        # Exit codes.
        base = [args.cli, "probe", "ffn", *model]
        expect(run(*base, cwd=tmp).returncode == 1, "missing --gaze exits 1")
        expect(run(*base, "--gaze", "fx/gaze.tsv", "--metric", "cosine", cwd=tmp).returncode == 1,
               "bad metric exits 1")
        expect(run(*base, "--gaze", "nowhere.tsv", cwd=tmp).returncode == 2, "unreadable gaze exits 2")
        (tmp / "junk.gptw").write_bytes(b"not a checkpoint")
        r = run(args.cli, "probe", "ffn", "--weights", "junk.gptw", "--vocab", "fx/vocab.json", "--merges",
                "fx/merges.txt", "--gaze", "fx/gaze.tsv", cwd=tmp)
        expect(r.returncode == 3, "corrupt checkpoint exits 3")
        expect(run(args.cli, "--version", cwd=tmp).returncode == 0, "--version exits 0")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
