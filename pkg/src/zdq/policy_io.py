"""Policy file persistence.

A policy file is a single zip archive: manifest.json plus one particle CSV
per cover representative.  Entries carry fixed timestamps and no
compression, so identical designs produce byte-identical files; floats pass
through repr, so a reloaded policy reproduces evaluation numbers exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

from .belief import Belief
from .errors import ModelMismatch
from .planner import (AverageCostSolution, BeliefCover, StationaryPolicy,
                      ValueTable)
from .quantizer import ConvexQuantizer

FORMAT_NAME = "zdq-policy"
FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def model_hash(model):
    """Digest of the canonicalized model fields (exact float encoding)."""
    parts = [f"dim={model.dim}"]
    parts.append("A=" + ",".join(float(v).hex() for v in model.A.ravel()))
    parts.append("cov=" + ",".join(float(v).hex()
                                   for v in model.noise.cov.ravel()))
    return hashlib.sha256(";".join(parts).encode()).hexdigest()


def _belief_csv_bytes(belief):
    buf = io.StringIO()
    buf.write("w," + ",".join(f"x{j + 1}" for j in range(belief.dim)) + "\r\n")
    for w, x in zip(belief.weights, belief.particles):
        buf.write(repr(float(w)) + ","
                  + ",".join(repr(float(v)) for v in x) + "\r\n")
    return buf.getvalue().encode()


def _belief_from_csv_bytes(raw):
    lines = raw.decode().splitlines()
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return Belief(data[:, 1:], data[:, 0])


def save_policy(path, solution, model, seeds=None):
    """Write an AverageCostSolution (plus its model identity) to a zip."""
    policy = solution.policy
    cover_files = [f"cover/rep_{k:05d}.csv"
                   for k in range(policy.cover.size)]
    last = solution.tables[-1]
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "model": {
            "dim": model.dim,
            "A": [float(v) for v in model.A.ravel()],
            "noise_cov": [float(v) for v in model.noise.cov.ravel()],
            "hash": model_hash(model),
        },
        "metric": {
            "name": "wasserstein2-exact",
            "n_particles": policy.n_particles,
            "radius": policy.cover.radius,
        },
        "actions": [
            {"M": q.M,
             "sites": [float(v) for v in q.sites.ravel()],
             "weights": [float(v) for v in q.weights]}
            for q in policy.actions
        ],
        "cover": {"size": policy.cover.size, "files": cover_files,
                  "provenance": policy.cover.provenance},
        "value_table": {
            "beta": last.beta,
            "values": [float(v) for v in last.values],
            "greedy": [int(g) for g in last.greedy],
            "iterations": last.iterations,
            "sup_residual": last.sup_residual,
            "converged": last.converged,
        },
        "average_cost": {
            "rho_star": solution.rho_star,
            "h": [float(v) for v in solution.h],
            "beta_schedule": list(solution.beta_schedule),
            "rho_trend": list(solution.rho_trend),
            "mu_ref_index": solution.mu_ref_index,
            "acoe_residual": solution.acoe_residual,
            "converged": solution.converged,
        },
        "decoders": np.asarray(policy.decoders).tolist(),
        "action_map": [int(a) for a in policy.action_map],
        "seeds": seeds or {},
    }
    blob = json.dumps(manifest, sort_keys=True, indent=1).encode()
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_EPOCH)
        zf.writestr(info, blob)
        for name, rep in zip(cover_files, policy.cover.representatives):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            zf.writestr(info, _belief_csv_bytes(rep))


def load_policy(path):
    """Read a policy file back into an AverageCostSolution plus model info.

    Returns (solution, model_info dict with dim/A/noise_cov/hash, seeds).
    """
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a {FORMAT_NAME} file")
        if manifest.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version "
                             f"{manifest.get('version')}")
        reps = [_belief_from_csv_bytes(zf.read(name))
                for name in manifest["cover"]["files"]]
    d = int(manifest["model"]["dim"])
    actions = [
        ConvexQuantizer(np.array(a["sites"]).reshape(a["M"], d),
                        np.array(a["weights"]))
        for a in manifest["actions"]
    ]
    cover = BeliefCover(reps, float(manifest["metric"]["radius"]),
                        manifest["cover"]["provenance"])
    vt = manifest["value_table"]
    table = ValueTable(float(vt["beta"]), np.array(vt["values"]),
                       np.array(vt["greedy"], dtype=np.int64),
                       int(vt["iterations"]), float(vt["sup_residual"]),
                       bool(vt["converged"]))
    policy = StationaryPolicy(cover, actions,
                              np.array(manifest["action_map"],
                                       dtype=np.int64),
                              np.array(manifest["decoders"]),
                              int(manifest["metric"]["n_particles"]))
    ac = manifest["average_cost"]
    solution = AverageCostSolution(
        rho_star=float(ac["rho_star"]),
        h=np.array(ac["h"]),
        policy=policy,
        beta_schedule=tuple(ac["beta_schedule"]),
        rho_trend=tuple(ac["rho_trend"]),
        mu_ref_index=int(ac["mu_ref_index"]),
        acoe_residual=float(ac["acoe_residual"]),
        tables=(table,),
        converged=bool(ac["converged"]),
    )
    return solution, manifest["model"], manifest.get("seeds", {})


def check_model_hash(model, model_info, path="policy"):
    if model_hash(model) != model_info["hash"]:
        raise ModelMismatch(
            f"{path}: policy was designed for a different model "
            f"(hash {model_info['hash'][:12]}..., "
            f"current {model_hash(model)[:12]}...)")
