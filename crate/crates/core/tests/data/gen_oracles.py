#!/usr/bin/env python3
"""Regenerates the frozen oracle data used by the integration tests.

Every expected value here comes from Python's own libraries (hashlib, pickle,
pickletools, scipy, sklearn, onnx) rather than from airscan, so the tests
compare two independent implementations. Run from this directory:

    python3 gen_oracles.py

Outputs are deterministic; rerunning must leave `git status` clean.
"""

import hashlib
import json
import os
import pickle
import pickletools
import random
import subprocess  # noqa: F401  (pickled by reference below, never called)

import numpy as np
from scipy import stats
from sklearn.metrics import roc_auc_score

HERE = os.path.dirname(os.path.abspath(__file__))


def dump(name, obj):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------- ANOVA
def anova():
    rng = np.random.default_rng(20240601)
    cases = []
    for i in range(50):
        k = int(rng.integers(2, 5))
        groups = []
        for g in range(k):
            n = int(rng.integers(2, 13))
            loc = float(rng.normal(0, 1.5))
            groups.append([round(float(x), 6) for x in rng.normal(loc, 1.0, n)])
        f, p = stats.f_oneway(*groups)
        cases.append({"groups": groups, "f": float(f), "p": float(p)})
    dump("anova_oracle.json", {"source": "scipy.stats.f_oneway " + __import__("scipy").__version__, "cases": cases})


# ---------------------------------------------------------------- ROC
def roc():
    rng = random.Random(7)
    cases = []
    for _ in range(30):
        n_pos, n_neg = rng.randint(1, 12), rng.randint(1, 12)
        # Scores on a coarse grid so ties are common.
        pos = [rng.randint(0, 8) / 4 for _ in range(n_pos)]
        neg = [rng.randint(0, 8) / 4 for _ in range(n_neg)]
        auc = roc_auc_score([1] * n_pos + [0] * n_neg, pos + neg)
        cases.append({"pos": pos, "neg": neg, "auc": float(auc)})
    dump("roc_oracle.json", {"source": "sklearn.metrics.roc_auc_score", "cases": cases})


# ---------------------------------------------------------------- Levenshtein
def lev(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein():
    rng = random.Random(11)
    alphabet = "abcdeé中"
    pairs = []
    for _ in range(100):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30)))
        pairs.append({"a": a, "b": b, "distance": lev(a, b)})
    dump("levenshtein_oracle.json", {"source": "full dynamic-programming matrix over code points", "pairs": pairs})


# ---------------------------------------------------------------- Simulation
def simulation():
    """Monte-Carlo distribution of the AUC for n=200 per class, N(0,1) vs N(0.5,1)."""
    rng = np.random.default_rng(12345)
    reps, n = 20000, 200
    aucs = np.empty(reps)
    for r in range(reps):
        tn = rng.normal(0.0, 1.0, n)
        tp = rng.normal(0.5, 1.0, n)
        aucs[r] = stats.mannwhitneyu(tp, tn).statistic / (n * n)
    dump(
        "simulation_oracle.json",
        {
            "n_per_class": n,
            "shift": 0.5,
            "reps": reps,
            "theoretical_auc": float(stats.norm.cdf(0.5 / np.sqrt(2))),
            "mc_mean": float(aucs.mean()),
            "q0001": float(np.quantile(aucs, 0.0001)),
            "q9999": float(np.quantile(aucs, 0.9999)),
            "accept_low": 0.55,
            "accept_high": 0.75,
        },
    )


# ---------------------------------------------------------------- Pickles
BENIGN = [
    {"a": 1, "b": [1, 2, 3]},
    [None, True, False, 0, -1, 2**40, 3.5, "text"],
    ("tuple", (1, (2, (3,))), []),
    {"nested": {"list": [{"k": "v"}] * 3, "float": -0.0}},
    ["ünicode", "中文", "", {}],
]
GUARDED = {
    3: {"bytes": b"\x00\x01raw"},
    4: [{1, 2, 3}, frozenset({"x"})],
}

CALLS = {"REDUCE", "GLOBAL", "STACK_GLOBAL", "INST", "OBJ", "NEWOBJ", "NEWOBJ_EX", "BUILD", "EXT1", "EXT2", "EXT4"}


class Call:
    def __init__(self, fn, *args):
        self.fn, self.args = fn, args

    def __reduce__(self):
        return self.fn, self.args


def pickles():
    d = os.path.join(HERE, "pickles")
    os.makedirs(d, exist_ok=True)
    expected = {}
    # 18 combinations cycling protocol 0-5 and the five shapes, plus two
    # objects that only pickle without REDUCE at higher protocols.
    objects = [(i % 6, BENIGN[i % 5]) for i in range(18)] + list(GUARDED.items())
    for i, (proto, obj) in enumerate(objects):
        data = pickle.dumps(obj, protocol=proto)
        ops = {op.name for op, _, _ in pickletools.genops(data)}
        assert not ops & CALLS, (i, ops & CALLS)
        assert pickle.loads(data) == obj
        name = f"benign_{i:02d}_p{proto}.pkl"
        with open(os.path.join(d, name), "wb") as f:
            f.write(data)
        expected[name] = {"critical": False, "globals": []}

    sentinel = "airscan_sentinel_touched"
    malicious = [
        (0, Call(os.system, f"touch {sentinel}"), f"{os.system.__module__}.system"),
        (2, Call(eval, f"open('{sentinel}','w')"), "builtins.eval"),
        (4, Call(subprocess.Popen, ["touch", sentinel]), "subprocess.Popen"),
        (5, Call(exec, f"open('{sentinel}','w')"), "builtins.exec"),
    ]
    for i, (proto, obj, global_name) in enumerate(malicious):
        data = pickle.dumps(obj, protocol=proto)
        # GLOBAL carries the name inline; pickle rewrites builtins to __builtin__
        # below protocol 3. STACK_GLOBAL names come from the callable itself.
        inline = [arg.replace(" ", ".") for op, arg, _ in pickletools.genops(data) if op.name == "GLOBAL"]
        if inline:
            global_name = inline[0]
        name = f"malicious_{i:02d}_p{proto}.pkl"
        with open(os.path.join(d, name), "wb") as f:
            f.write(data)
        expected[name] = {"critical": True, "globals": [global_name]}
    # INST form, which pickle.dumps never emits; checked against pickletools.
    data = f"(S'touch {sentinel}'\nios\nsystem\n.".encode()
    assert [op.name for op, _, _ in pickletools.genops(data)][-2] == "INST"
    with open(os.path.join(d, "malicious_04_inst.pkl"), "wb") as f:
        f.write(data)
    expected["malicious_04_inst.pkl"] = {"critical": True, "globals": ["os.system"]}
    dump("pickle_oracle.json", {"sentinel": sentinel, "files": expected})


# ---------------------------------------------------------------- Integrity
def integrity():
    d = os.path.join(HERE, "avalanche")
    os.makedirs(d, exist_ok=True)
    rng = random.Random(3)
    entries = []
    for i in range(10):
        size = rng.choice([1, 7, 64, 1000, 4096, 65537]) + i
        data = bytes(rng.getrandbits(8) for _ in range(size))
        name = f"file_{i:02d}.bin"
        with open(os.path.join(d, name), "wb") as f:
            f.write(data)
        entries.append({"path": name, "size": size, "sha256": hashlib.sha256(data).hexdigest()})
    entries.sort(key=lambda e: e["path"])
    level = [hashlib.sha256(e["path"].encode() + b"\x00" + bytes.fromhex(e["sha256"])).digest() for e in entries]
    while len(level) > 1:
        nxt = [hashlib.sha256(level[j] + level[j + 1]).digest() for j in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    zeros = hashlib.sha256()
    chunk = bytes(1 << 20)
    for _ in range(256):
        zeros.update(chunk)
    dump(
        "integrity_oracle.json",
        {
            "entries": entries,
            "merkle_root": level[0].hex(),
            "zeros_256mib_sha256": zeros.hexdigest(),
            "empty_sha256": hashlib.sha256(b"").hexdigest(),
        },
    )


# ---------------------------------------------------------------- ONNX
def onnx_model():
    import onnx
    from onnx import TensorProto, helper

    x = helper.make_tensor_value_info("x", TensorProto.FLOAT, [1, 4])
    y = helper.make_tensor_value_info("y", TensorProto.FLOAT, [1, 4])
    w = helper.make_tensor("w", TensorProto.FLOAT, [4, 4], [0.5] * 16)
    nodes = [
        helper.make_node("MatMul", ["x", "w"], ["h"]),
        helper.make_node("Relu", ["h"], ["r"]),
        helper.make_node("Backdoor", ["r"], ["c"], domain="com.evil"),
        helper.make_node("Relu", ["c"], ["y"]),
    ]
    graph = helper.make_graph(nodes, "g", [x], [y], initializer=[w])
    model = helper.make_model(
        graph,
        opset_imports=[helper.make_opsetid("", 17), helper.make_opsetid("com.evil", 1)],
        producer_name="airscan-oracle",
    )
    data = model.SerializeToString()
    with open(os.path.join(HERE, "custom_op.onnx"), "wb") as f:
        f.write(data)
    parsed = onnx.load_from_string(data)
    counts = {}
    for n in parsed.graph.node:
        key = (n.domain, n.op_type)
        counts[key] = counts.get(key, 0) + 1
    dump(
        "onnx_oracle.json",
        {
            "operators": [{"domain": d, "op_type": t, "count": c} for (d, t), c in sorted(counts.items())],
            "opset_domains": sorted(o.domain for o in parsed.opset_import),
            "disallowed": [{"domain": "com.evil", "op_type": "Backdoor"}],
        },
    )


# ---------------------------------------------------------------- Probe logs
def probe_logs():
    """Logs in the scorer's output format, validated against the shipped schemas."""
    import jsonschema

    schemas_dir = os.path.join(HERE, "..", "..", "data", "schemas")
    schema = lambda n: json.load(open(os.path.join(schemas_dir, n)))
    d = os.path.join(HERE, "probe_logs")
    os.makedirs(d, exist_ok=True)
    rng = random.Random(5)

    def write_jsonl(name, records, schema_name):
        validator = jsonschema.Draft202012Validator(schema(schema_name))
        with open(os.path.join(d, name), "w") as f:
            for r in records:
                validator.validate(r)
                f.write(json.dumps(r, separators=(",", ":"), ensure_ascii=False) + "\n")

    def write_meta(name, meta):
        jsonschema.validate(meta, schema("run-metadata.schema.json"))
        with open(os.path.join(d, name), "w") as f:
            json.dump(meta, f, indent=1, sort_keys=True)
            f.write("\n")

    scores = []
    for i in range(30):
        scores.append({"item_id": f"tn-{i:02d}", "label": "TN", "score": round(rng.gauss(-4.0, 1.0), 6), "group": "control"})
        scores.append({"item_id": f"tp-{i:02d}", "label": "TP", "score": round(rng.gauss(-3.4, 1.0), 6), "group": "contaminated"})
    write_jsonl("logprobs.jsonl", scores, "score-log.schema.json")
    write_meta("logprobs.meta.json", {"method": "logprob", "params": {"position_fraction": 0.5}, "seed": 0, "model_id": "tiny-public-model"})

    words = ["the", "model", "was", "trained", "on", "public", "data", "today"]
    edd = []
    for i in range(8):
        group = "contaminated" if i < 4 else "clean"
        base = " ".join(rng.choice(words) for _ in range(6))
        samples = []
        for _ in range(4):
            w = base.split()
            if group == "clean" or rng.random() < 0.3:
                w[rng.randrange(len(w))] = rng.choice(words)
                w[rng.randrange(len(w))] = rng.choice(words)
            samples.append(" ".join(w))
        edd.append({"item_id": f"p-{i}", "group": group, "baseline": base, "samples": samples})
    write_jsonl("edd.jsonl", edd, "edd-log.schema.json")
    write_meta("edd.meta.json", {"method": "edd", "params": {"n": 4, "temperature": 0.8}, "seed": 0, "model_id": "tiny-public-model"})

    trials = [{"prompt_id": f"q{i}", "trigger_present": i % 2 == 0, "attack_success": (i % 2 == 0 and i % 4 != 2) or i == 7} for i in range(16)]
    write_jsonl("backdoor.jsonl", trials, "backdoor-log.schema.json")

    summary = [
        {"probe": "Log-prob (Control)", "auc": 0.512, "tpr_at_fpr": 0.267, "source": "published"},
        {"probe": "Log-prob (Contaminated)", "auc": 0.646, "tpr_at_fpr": 0.500, "source": "published"},
    ]
    write_jsonl("summary.jsonl", summary, "summary-log.schema.json")

    pos = [r["score"] for r in scores if r["label"] == "TP"]
    neg = [r["score"] for r in scores if r["label"] == "TN"]
    by_group = {}
    for r in edd:
        by_group.setdefault(r["group"], []).extend(lev(r["baseline"], s) / max(len(r["baseline"]), len(s), 1) for s in r["samples"])
    trig = [t for t in trials if t["trigger_present"]]
    ctrl = [t for t in trials if not t["trigger_present"]]
    dump(
        "probe_logs_oracle.json",
        {
            "logprobs_auc": float(roc_auc_score([1] * len(pos) + [0] * len(neg), pos + neg)),
            "logprobs_anova": {k: float(v) for k, v in zip(("f", "p"), stats.f_oneway(pos, neg))},
            "edd_mean_distance": {g: sum(v) / len(v) for g, v in sorted(by_group.items())},
            "asr_triggered": sum(t["attack_success"] for t in trig) / len(trig),
            "asr_control": sum(t["attack_success"] for t in ctrl) / len(ctrl),
        },
    )


if __name__ == "__main__":
    anova()
    roc()
    levenshtein()
    simulation()
    pickles()
    integrity()
    onnx_model()
    probe_logs()
