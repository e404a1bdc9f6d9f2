"""Contains the stage runner that chains synthunits operations.

A `Pipeline` holds `Stage` objects and runs them in order against a
shared `RunContext`, which carries artifacts (codebook, unit
sequences, pitch tracks, manifests) from one stage to the next. Each
stage returns the files it wrote; the runner reports them with their
SHA-256 digests. A failing stage stops the run with a `StageError`
naming it.
"""
from dataclasses import dataclass, field
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import (
    Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple
)

from synthunits.augment import (
    as_synthetic_copies, AugmentPolicy, augment_corpus
)
from synthunits.config import PipelineConfig, StageConfig
from synthunits.errors import StageError, SynthUnitsError
from synthunits.formats.alignment import read_alignment
from synthunits.formats.fmat import (
    FeatureMatrix, read_embedding, read_features
)
from synthunits.formats.units import (
    expand, read_units, UnitSequence, write_units
)
from synthunits.formats.wav import read_wav
from synthunits.kmeans import (
    assign_all, Codebook, kmeans_fit, load_codebook, map_ordered,
    save_codebook
)
from synthunits.manifest import (
    DEFAULT_FRAME_RATE, load_manifest, Manifest, save_manifest
)
from synthunits.metrics import accumulate_counts, merge_tables, purity_report
from synthunits.pitch import extract_f0, PitchTrack, read_pitch, write_pitch
from synthunits.sampler import (
    compose_corpus, MixSpec, schedule_from_manifest
)
from synthunits.segment import (
    dedup_runs, DpdpParams, dpdp_segment, PoissonPenalty
)
from synthunits.targets import (
    load_phoneme_inventory, phoneme_ids, prepare_predictor_targets,
    prepare_t2u_target, target_record, write_target_records
)


logger = logging.getLogger(__name__)

DIGEST_CHUNK = 1 << 20


def file_digest(path: Path) -> str:
    """Returns the hex SHA-256 digest of a file."""
    hasher = hashlib.sha256()
    with path.open('rb') as fh:
        for chunk in iter(lambda: fh.read(DIGEST_CHUNK), b''):
            hasher.update(chunk)
    return hasher.hexdigest()


@dataclass
class RunContext:
    """Artifacts shared between stages in one pipeline run.

    Attributes:
        config: The PipelineConfig being run.
        manifest: The corpus manifest, loaded on first use.
        features: Feature matrices by utterance id, loaded on first use.
        codebook: The codebook, from 'fit' or a stage's `codebook`.
        units: Framewise unit sequences from 'assign' or 'dpdp'.
        dedup: Deduplicated unit sequences from 'dedup'.
        pitch: Pitch tracks from 'f0'.
        augmented: The augmented manifest from 'augment'.
    """

    config: PipelineConfig
    manifest: Optional[Manifest] = None
    features: Optional[Dict[str, FeatureMatrix]] = None
    codebook: Optional[Codebook] = None
    units: Optional[Dict[str, UnitSequence]] = None
    dedup: Optional[Dict[str, UnitSequence]] = None
    pitch: Optional[Dict[str, PitchTrack]] = None
    augmented: Optional[Manifest] = None

    @property
    def output_dir(self) -> Path:
        """Where stages write their outputs."""
        return self.config.output_dir

    @property
    def threads(self) -> int:
        """The worker cap."""
        return self.config.threads

    @property
    def frame_rate_hz(self) -> float:
        """The corpus feature frame rate (`[pipeline] frame_rate`)."""
        return self.config.settings.get_float('frame_rate',
                                              DEFAULT_FRAME_RATE)

    def load_manifest(self, stage: str) -> Manifest:
        """Returns the `[pipeline] manifest`, loading it once."""
        if self.manifest is None:
            path = require(stage, self.config.settings.get_path('manifest'))
            self.manifest = load_manifest(path, self.frame_rate_hz)
        return self.manifest

    def load_features(self, stage: str) -> Dict[str, FeatureMatrix]:
        """Returns `<features>/<id>.fmat` for every manifest record."""
        if self.features is None:
            manifest = self.load_manifest(stage)
            folder = require(stage, self.config.settings.get_path('features'))
            paths = [require(stage, folder / f'{uid}.fmat')
                     for uid in manifest.ids]
            loaded = map_ordered(lambda i: read_features(paths[i]),
                                 len(paths), self.threads)
            self.features = dict(zip(manifest.ids, loaded))
        return self.features


def require(stage: str, path: Path) -> Path:
    """Returns `path`, or raises StageError if it doesn't exist."""
    if not path.exists():
        raise StageError(stage, f"missing input {path}")
    return path


StageRunner = Callable[[StageConfig, RunContext], List[Path]]


class Stage:
    """One named step of a pipeline.

    Calling a Stage runs it once against a RunContext and returns the
    paths of the files it wrote.

    Attributes:
        name: The stage name, used in reports and errors.
        runner: A callable taking (StageConfig, RunContext) that does
            the stage's work and returns its output paths.
        stage_config: The StageConfig passed to `runner`.
    """

    def __init__(self, name: str, runner: StageRunner,
                 stage_config: Optional[StageConfig] = None) -> None:
        """Inits a Stage.

        Args:
            name: See `name` attribute.
            runner: See `runner` attribute.
            stage_config: (Optional.) See `stage_config` attribute.
                Defaults to an empty StageConfig named `name`.
        """
        self.name = name
        self.runner = runner
        self.stage_config = stage_config or StageConfig(name)

    def __call__(self, context: RunContext) -> List[Path]:
        """Runs the stage, wrapping failures in a StageError."""
        logger.info('Running stage %r', self.name)
        try:
            return self.runner(self.stage_config, context)
        except StageError:
            raise
        except (SynthUnitsError, ValueError, OSError) as exc:
            raise StageError(self.name, str(exc)) from exc


@dataclass(frozen=True)
class StageReport:
    """What one stage produced.

    Attributes:
        stage: The stage name.
        outputs: (relative path, sha256) pairs, sorted by path.
        status: 'ok' or 'failed'.
        error: The error message for a failed stage.
    """

    stage: str
    outputs: Tuple[Tuple[str, str], ...] = ()
    status: str = 'ok'
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Returns the report as a JSON-ready dict."""
        data: Dict[str, Any] = {
            'stage': self.stage,
            'status': self.status,
            'outputs': [{'path': p, 'sha256': d} for p, d in self.outputs],
        }
        if self.error is not None:
            data['error'] = self.error
        return data


class Pipeline:
    """Runs stages in order.

    Attributes:
        stages: The Stage objects, in the order they run.
    """

    def __init__(self, *stages: Stage) -> None:
        """Inits a Pipeline with the provided stages.

        Args:
            *stages: The Stage instances, in run order.
        """
        self.stages: List[Stage] = list(stages)

    def add_stages(self, *stages: Stage) -> None:
        """Appends stages, in the order provided."""
        self.stages.extend(stages)

    @property
    def names(self) -> List[str]:
        """Stage names, in run order."""
        return [stage.name for stage in self.stages]

    def __call__(self, context: RunContext) -> Iterator[StageReport]:
        """Runs each stage, yielding its report as it finishes.

        Raises:
            StageError: From the first stage that fails.
        """
        for stage in self.stages:
            paths = stage(context)
            yield StageReport(stage.name, _digests(paths,
                                                   context.output_dir))


def _digests(paths: Sequence[Path], root: Path) -> Tuple[Tuple[str, str],
                                                         ...]:
    pairs = []
    for path in paths:
        rel = os.path.relpath(path, root)
        pairs.append((Path(rel).as_posix(), file_digest(path)))
    return tuple(sorted(pairs))


# Stage runners.

def _stage_codebook(cfg: StageConfig, ctx: RunContext) -> Codebook:
    if cfg.has('codebook'):
        return load_codebook(require(cfg.name, cfg.get_path('codebook')))
    if ctx.codebook is None:
        raise StageError(cfg.name, "no codebook: set 'codebook' or run the "
                                   "'fit' stage first")
    return ctx.codebook


def _stage_manifest(cfg: StageConfig, ctx: RunContext,
                    key: str = 'manifest') -> Manifest:
    if cfg.has(key):
        return load_manifest(require(cfg.name, cfg.get_path(key)),
                             ctx.frame_rate_hz)
    return ctx.load_manifest(cfg.name)


def run_fit(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Fits a codebook on the pooled corpus features."""
    features = ctx.load_features(cfg.name)
    ctx.codebook = kmeans_fit(
        list(features.values()),
        k=cfg.get_int('k', 500),
        max_iters=cfg.get_int('max_iters', 100),
        tol=cfg.get_float('tol', 1e-4),
        seed=cfg.seed,
        sample_fraction=cfg.get_float('sample_fraction', 1.0),
        threads=ctx.threads,
    )
    path = ctx.output_dir / 'codebook.kmcb'
    save_codebook(ctx.codebook, path)
    return [path]


def run_assign(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Assigns every frame to its nearest centroid."""
    codebook = _stage_codebook(cfg, ctx)
    features = ctx.load_features(cfg.name)
    labels = assign_all(list(features.values()), codebook, ctx.threads)
    ctx.units = {
        uid: UnitSequence.framewise(lab.tolist(), features[uid].frame_rate_hz)
        for uid, lab in zip(features, labels)
    }
    path = ctx.output_dir / 'units.assign.txt'
    write_units(ctx.units, path)
    return [path]


def dpdp_params(cfg: StageConfig) -> DpdpParams:
    """Builds DpdpParams from `lambda`, `max_segment`, and `penalty`."""
    lam = cfg.get_float('lambda', 1.0)
    kind = cfg.get('penalty', 'constant')
    if kind == 'constant':
        penalty = None
    elif kind == 'poisson':
        penalty = PoissonPenalty(lam, cfg.get_float('mu', 5.0))
    else:
        raise StageError(cfg.name, f"unknown penalty {kind!r}; use "
                                   f"'constant' or 'poisson'")
    return DpdpParams(lam, cfg.get_int('max_segment', 50), penalty)


def run_dpdp(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Segments every utterance with DPDP."""
    codebook = _stage_codebook(cfg, ctx)
    params = dpdp_params(cfg)
    features = ctx.load_features(cfg.name)
    ids = list(features)
    segmented = map_ordered(
        lambda i: dpdp_segment(features[ids[i]], codebook, params),
        len(ids), ctx.threads
    )
    ctx.units = dict(zip(ids, segmented))
    path = ctx.output_dir / 'units.dpdp.txt'
    write_units(ctx.units, path)
    return [path]


def run_dedup(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Merges runs of the current unit sequences."""
    if cfg.has('units'):
        source = read_units(require(cfg.name, cfg.get_path('units')),
                            ctx.frame_rate_hz)
    elif ctx.units is not None:
        source = ctx.units
    else:
        raise StageError(cfg.name, "no unit sequences: set 'units' or run "
                                   "'assign' or 'dpdp' first")
    ctx.dedup = {uid: dedup_runs(seq) for uid, seq in source.items()}
    path = ctx.output_dir / 'units.dedup.txt'
    write_units(ctx.dedup, path)
    return [path]


def _framewise_units(cfg: StageConfig, ctx: RunContext
                     ) -> Mapping[str, UnitSequence]:
    if ctx.units is not None:
        return ctx.units
    if ctx.dedup is not None:
        return ctx.dedup
    raise StageError(cfg.name, "no unit sequences: run 'assign', 'dpdp' or "
                               "'dedup' first")


def run_metrics(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Computes phone and cluster purity against phone alignments."""
    units = _framewise_units(cfg, ctx)
    folder = require(cfg.name, cfg.get_path('alignments'))
    masked = frozenset(p for p in cfg.get('mask', '').replace(',', ' ')
                       .split() if p)
    tables = []
    for uid, seq in units.items():
        frames = expand(seq)
        alignment = read_alignment(require(cfg.name, folder / f'{uid}.ali'),
                                   len(frames))
        tables.append(accumulate_counts(frames, alignment, masked))
    report = purity_report(merge_tables(tables))
    path = ctx.output_dir / 'metrics.json'
    path.write_text(json.dumps(report, sort_keys=True) + '\n',
                    encoding='utf-8')
    logger.info('Phone purity %.4f, cluster purity %.4f',
                report['phone_purity'], report['cluster_purity'])
    return [path]


def run_f0(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Extracts log-F0 tracks for every utterance."""
    manifest = _stage_manifest(cfg, ctx)
    folder = ctx.output_dir / 'pitch'
    folder.mkdir(parents=True, exist_ok=True)
    f_min = cfg.get_float('f_min', 60.0)
    f_max = cfg.get_float('f_max', 400.0)
    threshold = cfg.get_float('voicing_threshold', 0.3)
    records = manifest.records

    def run(i: int) -> PitchTrack:
        audio = read_wav(require(cfg.name, manifest.resolve(records[i])))
        return extract_f0(audio, ctx.frame_rate_hz, f_min, f_max, threshold)

    tracks = map_ordered(run, len(records), ctx.threads)
    ctx.pitch = dict(zip(manifest.ids, tracks))
    paths = []
    for uid, track in ctx.pitch.items():
        path = folder / f'{uid}.fmat'
        write_pitch(track, path)
        paths.append(path)
    return paths


def run_targets(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Writes predictor (and, with a phone inventory, T2U) targets."""
    if ctx.dedup is None:
        raise StageError(cfg.name, "no deduplicated units: run 'dedup' "
                                   "first")
    embeddings = require(cfg.name, cfg.get_path('embeddings'))
    pitch_dir = cfg.get_path('pitch', ctx.output_dir / 'pitch')
    inventory = load_phoneme_inventory(
        require(cfg.name, cfg.get_path('phones'))
    ) if cfg.has('phones') else None
    records = ctx.load_manifest(cfg.name).by_id() if inventory else {}
    num_units = 0
    if cfg.has('num_units'):
        num_units = cfg.get_int('num_units')
    elif inventory is not None:
        num_units = _stage_codebook(cfg, ctx).k
    out = []
    for uid, seq in ctx.dedup.items():
        pitch_path = pitch_dir / f'{uid}.fmat'
        if ctx.pitch is not None and uid in ctx.pitch:
            track = ctx.pitch[uid]
        else:
            track = read_pitch(require(cfg.name, pitch_path))
        emb_path = require(cfg.name, embeddings / f'{uid}.fmat')
        predictor = prepare_predictor_targets(seq, track,
                                              read_embedding(emb_path, uid))
        t2u = None
        if inventory is not None:
            text = records[uid].text if uid in records else None
            if not text:
                raise StageError(cfg.name, f"utterance {uid!r} has no "
                                           f"phoneme text")
            t2u = prepare_t2u_target(phoneme_ids(text, inventory, uid), seq,
                                     num_units, len(inventory), uid)
        out.append(target_record(
            uid, predictor, t2u,
            Path(os.path.relpath(pitch_path, ctx.output_dir)).as_posix(),
            Path(os.path.relpath(emb_path, ctx.output_dir)).as_posix(),
        ))
    path = ctx.output_dir / 'targets.jsonl'
    write_target_records(out, path)
    return [path]


def run_augment(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Stretches durations and mixes noise into the corpus audio."""
    stretch = cfg.get_range('stretch', (1.0, 1.5))
    snr = cfg.get_range('snr', (0.0, 15.0))
    policy = AugmentPolicy(stretch[0], stretch[1], snr[0], snr[1], cfg.seed)
    noise = _stage_manifest(cfg, ctx, 'noise_manifest') \
        if cfg.has('noise_manifest') else None
    out_dir = ctx.output_dir / 'augmented'
    result = augment_corpus(ctx.load_manifest(cfg.name), policy, noise,
                            out_dir, ctx.dedup, ctx.threads)
    ctx.augmented = result.manifest
    manifest_path = out_dir / 'manifest.jsonl'
    save_manifest(result.manifest, manifest_path)
    paths = [manifest_path]
    if result.units:
        units_path = out_dir / 'units.txt'
        write_units(result.units, units_path)
        paths.append(units_path)
    if noise is not None:
        paths.extend(out_dir / r.audio_path for r in result.manifest)
    return paths


def run_compose(cfg: StageConfig, ctx: RunContext) -> List[Path]:
    """Merges natural and synthetic manifests; optionally samples."""
    natural = _stage_manifest(cfg, ctx, 'natural')
    if cfg.has('synthetic'):
        synthetic = _stage_manifest(cfg, ctx, 'synthetic')
    elif ctx.augmented is not None:
        # Without a separate natural corpus, the augmented copies are
        # composed with the records they were made from.
        synthetic = ctx.augmented if cfg.has('natural') \
            else as_synthetic_copies(ctx.augmented)
    else:
        raise StageError(cfg.name, "no synthetic manifest: set 'synthetic' "
                                   "or run 'augment' first")
    epoch_size = cfg.get_int('epoch_size', 1)
    weight_by = cfg.get('weight_by', 'count')
    spec = MixSpec(natural, synthetic, cfg.get_float('rate', 1.0),
                   epoch_size, cfg.seed, weight_by)
    composed = compose_corpus(spec, ctx.output_dir)
    path = ctx.output_dir / 'composed.jsonl'
    save_manifest(composed, path)
    paths = [path]
    epochs = cfg.get_int('epochs', 0)
    if epochs:
        schedule_path = ctx.output_dir / 'schedule.txt'
        write_schedule(composed, epoch_size, epochs, cfg.seed, weight_by,
                       schedule_path)
        paths.append(schedule_path)
    return paths


def write_schedule(manifest: Manifest, epoch_size: int, epochs: int,
                   seed: int, weight_by: str, path: Path) -> None:
    """Writes "epoch<TAB>id" lines for each epoch's schedule."""
    with path.open('w', encoding='utf-8', newline='\n') as fh:
        for epoch in range(epochs):
            for uid in schedule_from_manifest(manifest, epoch_size, seed,
                                              epoch, weight_by):
                fh.write(f'{epoch}\t{uid}\n')


RUNNERS: Dict[str, StageRunner] = {
    'fit': run_fit,
    'assign': run_assign,
    'dpdp': run_dpdp,
    'dedup': run_dedup,
    'metrics': run_metrics,
    'f0': run_f0,
    'targets': run_targets,
    'augment': run_augment,
    'compose': run_compose,
}


def build_pipeline(config: PipelineConfig) -> Pipeline:
    """Builds a Pipeline from a config's stage list."""
    return Pipeline(*(Stage(sc.name, RUNNERS[sc.name], sc)
                      for sc in config.stages))


@dataclass
class PipelineReport:
    """The outcome of `run_pipeline`.

    Attributes:
        status: 0 on success, 1 on failure.
        stages: One StageReport per stage run, including a failed one.
        error: The StageError that stopped the run, if any.
    """

    status: int = 0
    stages: List[StageReport] = field(default_factory=list)
    error: Optional[StageError] = None

    def lines(self) -> List[str]:
        """The report as JSON lines, one per stage."""
        return [json.dumps(r.to_dict(), sort_keys=True) for r in self.stages]


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Runs every configured stage in order.

    Returns:
        A PipelineReport. On failure, status is 1, the last stage
        report has status 'failed', and `error` names the stage.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    context = RunContext(config)
    report = PipelineReport()
    pipeline = build_pipeline(config)
    try:
        for stage_report in pipeline(context):
            report.stages.append(stage_report)
    except StageError as exc:
        logger.error('%s', exc)
        report.status = 1
        report.error = exc
        report.stages.append(StageReport(exc.stage, status='failed',
                                         error=str(exc)))
    return report
