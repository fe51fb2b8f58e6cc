# %% [markdown]
# # The command-line workflow
#
# Every step of the pipeline is also a subcommand. Outputs are plain files:
# binary matrices and code tables, JSON manifests, and CSVs that begin with a
# ``# config_hash=...`` line.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp(prefix="spdq-demo-"))
(work / "config.json").write_text(json.dumps({"hyper": {"outer_iters": 10}, "eval": {"map_norm": "min"}}))


def spdq(*args):
    cmd = [sys.executable, "-m", "spdq.cli", *map(str, args)]
    done = subprocess.run(cmd, capture_output=True, text=True)
    print("$ spdq", " ".join(map(str, args)))
    print(done.stderr.strip().splitlines()[-1])
    return done.returncode


# %%
spdq("gen", "--classes", 5, "--n", 1000, "--seed", 1, "--out", work / "data")
spdq("train", "--data", work / "data", "--config", work / "config.json", "--out", work / "model")
spdq("index", "--model", work / "model", "--data", work / "data", "--out", work / "index")
spdq("query", "--model", work / "model", "--index", work / "index", "--data", work / "data",
     "--item", 0, "--topn", 5, "--out", work / "ranking.csv")
print((work / "ranking.csv").read_text())

# %%
spdq("eval", "--model", work / "model", "--data", work / "data", "--out", work / "eval")
print((work / "eval" / "map.csv").read_text())

# %% [markdown]
# Failures print one machine-readable line and exit with status 2:

# %%
print("exit status:", spdq("train", "--data", work / "missing", "--out", work / "m2"))
