"""The fitted model collection and its on-disk directory format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._base import STEPS_PER_DAY, Weekday
from .._csv import read_csv, write_csv
from .features import FeatureKind, FeatureSpec
from .lag import LagMode
from .markov import LtiBank, LtiModel, LtvModel
from .regression import AcMlrModel, MlrModel, OlMlrModel, TodModel


class MissingModelError(FileNotFoundError):
    pass


@dataclass(frozen=True)
class ModelBundle:
    tods: tuple                  # TodModel per weekday, Mon..Fri
    ol_mlr: OlMlrModel
    ac_mlr: AcMlrModel
    bank: LtiBank
    ltv1: LtvModel
    ltv2: LtvModel

    def lti_models(self) -> list[LtiModel]:
        return list(self.bank.models)

    def ac_models(self) -> list:
        return self.lti_models() + [self.ac_mlr, self.ltv1, self.ltv2]

    def ol_models(self) -> list:
        return list(self.tods) + [self.ol_mlr]


def _mlr_comment(model: MlrModel) -> str:
    s = model.feature_spec
    return (f"kind={s.kind.value} bin_minutes={s.bin_minutes} lag={s.lag} "
            f"ridge={model.ridge_weight!r}")


def _parse_mlr_comment(comment: str | None, path) -> tuple[FeatureSpec, float]:
    if not comment:
        raise ValueError(f"{path}: missing spec comment row")
    fields = dict(item.split("=", 1) for item in comment.split())
    spec = FeatureSpec(FeatureKind(fields["kind"]), int(fields["bin_minutes"]), int(fields["lag"]))
    return spec, float(fields["ridge"])


def save_bundle(bundle: ModelBundle, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for tod in bundle.tods:
        write_csv(d / f"tod_{tod.label.label}.csv", ["minute", "alpha_kw"],
                  zip(range(STEPS_PER_DAY), tod.alpha))
    for model in (bundle.ol_mlr.res, bundle.ol_mlr.com, bundle.ac_mlr.model):
        write_csv(d / f"mlr_{model.feature_spec.kind.value}.csv", ["index", "coefficient"],
                  enumerate(model.coefficients), comment=_mlr_comment(model))
    write_csv(d / "lti_bank.csv",
              ["bin_temp_f", "a00", "a01", "a10", "a11", "p_bar_kw", "n_ac"],
              ([m.bin_temp, *m.A.ravel(), m.p_bar, m.n_ac] for m in bundle.bank.models))
    write_csv(d / "ltv.csv", ["mode", "tau_steps"],
              [[bundle.ltv1.mode.value, bundle.ltv1.tau], [bundle.ltv2.mode.value, bundle.ltv2.tau]])
    return d


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingModelError(f"model file missing: {path}")
    return path


def load_bundle(directory) -> ModelBundle:
    d = Path(directory)
    tods = []
    for wd in Weekday:
        _, _, cols = read_csv(_require(d / f"tod_{wd.label}.csv"), ["minute", "alpha_kw"],
                              {"minute": int})
        tods.append(TodModel(np.array(cols["alpha_kw"]), wd))
    mlr = {}
    for kind in FeatureKind:
        path = _require(d / f"mlr_{kind.value}.csv")
        comment, _, cols = read_csv(path, ["index", "coefficient"], {"index": int})
        spec, ridge = _parse_mlr_comment(comment, path)
        mlr[kind] = MlrModel(np.array(cols["coefficient"]), spec, ridge)
    _, _, cols = read_csv(_require(d / "lti_bank.csv"),
                          ["bin_temp_f", "a00", "a01", "a10", "a11", "p_bar_kw", "n_ac"],
                          {"n_ac": int})
    models = tuple(
        LtiModel(np.array([[cols["a00"][i], cols["a01"][i]], [cols["a10"][i], cols["a11"][i]]]),
                 cols["p_bar_kw"][i], cols["bin_temp_f"][i], cols["n_ac"][i])
        for i in range(len(cols["bin_temp_f"]))
    )
    temps = [m.bin_temp for m in models]
    delta = temps[1] - temps[0] if len(temps) > 1 else 1.0
    bank = LtiBank(models, min(temps), max(temps), delta)
    _, _, cols = read_csv(_require(d / "ltv.csv"), ["mode", "tau_steps"],
                          {"mode": str, "tau_steps": int})
    taus = dict(zip(cols["mode"], cols["tau_steps"]))
    return ModelBundle(
        tuple(tods),
        OlMlrModel(mlr[FeatureKind.OL_RES], mlr[FeatureKind.OL_COM]),
        AcMlrModel(mlr[FeatureKind.AC]),
        bank,
        LtvModel(bank, LagMode.LAGGED, taus[LagMode.LAGGED.value]),
        LtvModel(bank, LagMode.MOVING_AVG, taus[LagMode.MOVING_AVG.value]),
    )
