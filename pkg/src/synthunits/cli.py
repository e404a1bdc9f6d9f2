"""Contains the `synthunits` command-line interface.

Every operation is a subcommand; `pipeline` chains them from a config
file. Data (reports, schedules, stats) goes to stdout; diagnostics and
errors go to stderr. Any validation error exits with status 1.
"""
import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Callable, Dict, List, Optional, Sequence, TextIO

from synthunits import __version__
from synthunits.augment import AugmentPolicy, augment_corpus
from synthunits.config import load_config, parse_range
from synthunits.errors import SynthUnitsError
from synthunits.formats.alignment import read_alignment
from synthunits.formats.fmat import (
    FeatureMatrix, read_embedding, read_features
)
from synthunits.formats.units import (
    expand, read_units, UnitSequence, write_units
)
from synthunits.formats.wav import read_wav
from synthunits.kmeans import (
    assign_all, kmeans_fit, load_codebook, save_codebook
)
from synthunits.manifest import (
    build_split, load_manifest, manifest_stats, save_manifest
)
from synthunits.metrics import accumulate_counts, merge_tables, purity_report
from synthunits.pipeline import (
    file_digest, run_pipeline, write_schedule
)
from synthunits.pitch import extract_f0, read_pitch, write_pitch
from synthunits.sampler import (
    compose_corpus, MixSpec, schedule_from_manifest
)
from synthunits.segment import (
    dedup_runs, DpdpParams, dpdp_segment, length_ratio, PoissonPenalty
)
from synthunits.targets import (
    load_phoneme_inventory, phoneme_ids, prepare_predictor_targets,
    prepare_t2u_target, target_record, write_target_records
)


logger = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'


def _emit(data: object, out: TextIO) -> None:
    out.write(json.dumps(data, sort_keys=True))
    out.write('\n')


def _load_features(paths: Sequence[str]) -> Dict[str, FeatureMatrix]:
    # Utterance ids come from file stems: <id>.fmat.
    features: Dict[str, FeatureMatrix] = {}
    for raw in paths:
        path = Path(raw)
        if path.stem in features:
            raise ValueError(f"Duplicate utterance id {path.stem!r} among "
                             f"feature files.")
        features[path.stem] = read_features(path)
    return features


def cmd_manifest_stats(args: argparse.Namespace, out: TextIO) -> None:
    """Prints manifest statistics as JSON."""
    _emit(manifest_stats(load_manifest(args.manifest)).to_dict(), out)


def cmd_split(args: argparse.Namespace, out: TextIO) -> None:
    """Builds an hours/speakers-limited split."""
    include = load_manifest(args.include) if args.include else None
    split = build_split(load_manifest(args.manifest), args.hours,
                        args.speakers, args.balance, args.seed, include)
    save_manifest(split, args.out)
    _emit(manifest_stats(split).to_dict(), out)


def cmd_kmeans_fit(args: argparse.Namespace, out: TextIO) -> None:
    """Fits and saves a codebook."""
    features = _load_features(args.features)
    codebook = kmeans_fit(list(features.values()), args.k, args.max_iters,
                          args.tol, args.seed, args.sample_fraction,
                          args.threads)
    save_codebook(codebook, args.out)
    meta = codebook.training_meta
    _emit({'k': codebook.k, 'dim': codebook.dim,
           'iterations': meta.iterations, 'inertia': meta.inertia}, out)


def cmd_kmeans_assign(args: argparse.Namespace, out: TextIO) -> None:
    """Writes framewise unit ids for each feature file."""
    codebook = load_codebook(args.codebook)
    features = _load_features(args.features)
    labels = assign_all(list(features.values()), codebook, args.threads)
    write_units({uid: UnitSequence.framewise(lab.tolist(),
                                             features[uid].frame_rate_hz)
                 for uid, lab in zip(features, labels)}, args.out)


def cmd_dpdp(args: argparse.Namespace, out: TextIO) -> None:
    """Writes DPDP-smoothed framewise units for each feature file."""
    codebook = load_codebook(args.codebook)
    penalty = PoissonPenalty(args.lam, args.mu) \
        if args.penalty == 'poisson' else None
    params = DpdpParams(args.lam, args.max_segment, penalty)
    features = _load_features(args.features)
    write_units({uid: dpdp_segment(mat, codebook, params)
                 for uid, mat in features.items()}, args.out)


def cmd_dedup(args: argparse.Namespace, out: TextIO) -> None:
    """Merges runs in a unit file."""
    units = read_units(args.units)
    write_units({uid: dedup_runs(seq) for uid, seq in units.items()},
                args.out)


def cmd_ratio(args: argparse.Namespace, out: TextIO) -> None:
    """Prints the mean unit/phoneme length ratio."""
    units = read_units(args.units)
    folder = Path(args.alignments)
    ids = list(units)
    # One phoneme per aligned interval.
    phonemes = [len(read_alignment(folder / f'{uid}.ali',
                                   units[uid].num_frames).intervals)
                for uid in ids]
    ratio = length_ratio([len(units[uid]) for uid in ids], phonemes, ids)
    _emit({'ratio': ratio, 'num_utterances': len(ids)}, out)


def cmd_purity(args: argparse.Namespace, out: TextIO) -> None:
    """Prints phone purity, cluster purity, and k_effective."""
    folder = Path(args.alignments)
    masked = frozenset(args.mask.replace(',', ' ').split()) \
        if args.mask else frozenset()
    tables = []
    for uid, seq in read_units(args.units).items():
        frames = expand(seq)
        alignment = read_alignment(folder / f'{uid}.ali', len(frames))
        tables.append(accumulate_counts(frames, alignment, masked))
    report = purity_report(merge_tables(tables))
    if args.report == 'json':
        _emit(report, out)
        return
    for key in sorted(report):
        out.write(f'{key}\t{report[key]}\n')


def cmd_f0(args: argparse.Namespace, out: TextIO) -> None:
    """Writes a pitch track per WAV file to the output directory."""
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for raw in args.wavs:
        path = Path(raw)
        track = extract_f0(read_wav(path), args.frame_rate, args.f_min,
                           args.f_max, args.threshold)
        write_pitch(track, out_dir / f'{path.stem}.fmat')
        _emit({'id': path.stem, 'frames': len(track),
               'voiced': int(track.voiced.sum())}, out)


def cmd_targets(args: argparse.Namespace, out: TextIO) -> None:
    """Writes predictor and optional T2U targets as JSON lines."""
    units = read_units(args.units, dedup=True)
    pitch_dir = Path(args.pitch_dir)
    emb_dir = Path(args.embeddings)
    inventory = load_phoneme_inventory(args.phones) if args.phones else None
    records = load_manifest(args.manifest).by_id() \
        if args.manifest else {}
    if inventory is not None and (args.num_units is None or not records):
        raise ValueError("--phones needs --num-units and --manifest.")
    rows = []
    for uid, seq in units.items():
        pitch_path = pitch_dir / f'{uid}.fmat'
        emb_path = emb_dir / f'{uid}.fmat'
        predictor = prepare_predictor_targets(
            seq, read_pitch(pitch_path), read_embedding(emb_path, uid)
        )
        t2u = None
        if inventory is not None:
            if uid not in records or not records[uid].text:
                raise ValueError(f"Utterance {uid!r} has no phoneme text.")
            t2u = prepare_t2u_target(
                phoneme_ids(records[uid].text or '', inventory, uid), seq,
                int(args.num_units), len(inventory), uid
            )
        rows.append(target_record(uid, predictor, t2u, str(pitch_path),
                                  str(emb_path)))
    write_target_records(rows, args.out)


def cmd_augment(args: argparse.Namespace, out: TextIO) -> None:
    """Augments a manifest into an output directory."""
    stretch = parse_range(args.stretch, '--stretch')
    snr = parse_range(args.snr, '--snr')
    policy = AugmentPolicy(stretch[0], stretch[1], snr[0], snr[1],
                           args.seed)
    noise = load_manifest(args.noise_manifest) if args.noise_manifest \
        else None
    units = read_units(args.units, dedup=True) if args.units else None
    out_dir = Path(args.out_dir)
    result = augment_corpus(load_manifest(args.manifest), policy, noise,
                            out_dir, units, args.threads)
    save_manifest(result.manifest, out_dir / 'manifest.jsonl')
    if result.units:
        write_units(result.units, out_dir / 'units.txt')
    _emit({'utterances': len(result.manifest),
           'clip_count': result.clip_count}, out)


def cmd_compose(args: argparse.Namespace, out: TextIO) -> None:
    """Merges natural and synthetic manifests with sampling weights."""
    spec = MixSpec(load_manifest(args.natural), load_manifest(args.synthetic),
                   args.rate, weight_by=args.weight_by)
    out_path = Path(args.out)
    save_manifest(compose_corpus(spec, out_path.parent), out_path)
    _emit({'path': str(out_path), 'sha256': file_digest(out_path)}, out)


def cmd_sample(args: argparse.Namespace, out: TextIO) -> None:
    """Prints "epoch<TAB>id" schedule lines."""
    manifest = load_manifest(args.manifest)
    if args.out:
        write_schedule(manifest, args.epoch_size, args.epochs, args.seed,
                       args.weight_by, Path(args.out))
        return
    for epoch in range(args.epochs):
        for uid in schedule_from_manifest(manifest, args.epoch_size,
                                          args.seed, epoch, args.weight_by):
            out.write(f'{epoch}\t{uid}\n')


def cmd_pipeline(args: argparse.Namespace, out: TextIO) -> int:
    """Runs a config-driven pipeline, printing one report per stage."""
    threads = args.threads if args.threads_given else None
    report = run_pipeline(load_config(args.config, threads))
    for line in report.lines():
        out.write(line)
        out.write('\n')
    return report.status


Command = Callable[[argparse.Namespace, TextIO], Optional[int]]


def build_parser() -> argparse.ArgumentParser:
    """Builds the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog='synthunits',
        description='Discrete speech-unit extraction, target preparation, '
                    'augmentation and corpus composition.'
    )
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log debug detail to stderr')
    parser.add_argument('-q', '--quiet', action='store_true',
                        help='log only warnings and errors')
    parser.add_argument('--threads', type=int, default=None,
                        help='worker cap for within-stage parallelism')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    def add(name: str, func: Command, help_text: str
            ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add('manifest-stats', cmd_manifest_stats, 'print manifest statistics')
    p.add_argument('manifest')

    p = add('split', cmd_split, 'select an hours/speaker-limited subset')
    p.add_argument('manifest')
    p.add_argument('--hours', type=float, required=True)
    p.add_argument('--speakers', type=int, required=True)
    p.add_argument('--balance', action='store_true',
                   help='balance speaker genders')
    p.add_argument('--include', help='manifest whose records are kept')
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('out')

    p = add('kmeans-fit', cmd_kmeans_fit, 'fit a k-means codebook')
    p.add_argument('features', nargs='+', help='<id>.fmat feature files')
    p.add_argument('--k', type=int, default=500)
    p.add_argument('--max-iters', type=int, default=100)
    p.add_argument('--tol', type=float, default=1e-4)
    p.add_argument('--sample-fraction', type=float, default=1.0)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--out', required=True)

    p = add('kmeans-assign', cmd_kmeans_assign, 'assign frames to units')
    p.add_argument('features', nargs='+')
    p.add_argument('--codebook', required=True)
    p.add_argument('--out', required=True)

    p = add('dpdp', cmd_dpdp, 'duration-penalized segmentation')
    p.add_argument('features', nargs='+')
    p.add_argument('--codebook', required=True)
    p.add_argument('--lambda', dest='lam', type=float, default=1.0)
    p.add_argument('--max-segment', type=int, default=50)
    p.add_argument('--penalty', choices=('constant', 'poisson'),
                   default='constant')
    p.add_argument('--mu', type=float, default=5.0)
    p.add_argument('--out', required=True)

    p = add('dedup', cmd_dedup, 'merge consecutive repeated units')
    p.add_argument('units')
    p.add_argument('--out', required=True)

    p = add('ratio', cmd_ratio, 'mean unit/phoneme length ratio')
    p.add_argument('units')
    p.add_argument('alignments', help='directory of <id>.ali files')

    p = add('purity', cmd_purity, 'phone and cluster purity')
    p.add_argument('units')
    p.add_argument('alignments', help='directory of <id>.ali files')
    p.add_argument('--mask', help='comma-separated phones to ignore')
    p.add_argument('--report', choices=('json', 'text'), default='json')

    p = add('f0', cmd_f0, 'extract log-F0 tracks')
    p.add_argument('wavs', nargs='+')
    p.add_argument('--frame-rate', type=float, default=50.0)
    p.add_argument('--f-min', type=float, default=60.0)
    p.add_argument('--f-max', type=float, default=400.0)
    p.add_argument('--threshold', type=float, default=0.3)
    p.add_argument('--out-dir', required=True)

    p = add('targets', cmd_targets, 'prepare training targets')
    p.add_argument('units', help='deduplicated unit file')
    p.add_argument('--pitch-dir', required=True)
    p.add_argument('--embeddings', required=True,
                   help='directory of <id>.fmat session embeddings')
    p.add_argument('--phones', help='phoneme inventory file')
    p.add_argument('--manifest')
    p.add_argument('--num-units', type=int)
    p.add_argument('--out', required=True)

    p = add('augment', cmd_augment, 'stretch durations and add noise')
    p.add_argument('manifest')
    p.add_argument('out_dir')
    p.add_argument('--stretch', default='1.0:1.5')
    p.add_argument('--snr', default='0:15')
    p.add_argument('--noise-manifest')
    p.add_argument('--units', help='deduplicated unit file to stretch')
    p.add_argument('--seed', type=int, required=True)

    p = add('compose', cmd_compose, 'merge corpora with oversampling')
    p.add_argument('--rate', type=float, required=True)
    p.add_argument('--natural', required=True)
    p.add_argument('--synthetic', required=True)
    p.add_argument('--weight-by', choices=('count', 'duration'),
                   default='count')
    p.add_argument('--out', required=True)

    p = add('sample', cmd_sample, 'draw epoch schedules')
    p.add_argument('manifest')
    p.add_argument('--epoch-size', type=int, required=True)
    p.add_argument('--epochs', type=int, default=1)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--weight-by', choices=('count', 'duration'),
                   default='count')
    p.add_argument('--out', help='write to a file instead of stdout')

    p = add('pipeline', cmd_pipeline, 'run stages from a config file')
    p.add_argument('config')
    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    """Sends log records to stderr at the requested level."""
    level = logging.DEBUG if verbose else \
        logging.WARNING if quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level, format=LOG_FORMAT,
                        force=True)


def main(argv: Optional[List[str]] = None,
         out: Optional[TextIO] = None) -> int:
    """Runs the CLI; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    args.threads_given = args.threads is not None
    if args.threads is None:
        args.threads = 1
    if args.threads < 1:
        logger.error('--threads must be >= 1, got %d', args.threads)
        return 1
    try:
        status = args.func(args, out or sys.stdout)
    except (SynthUnitsError, ValueError, OSError) as exc:
        logger.error('%s', exc)
        return 1
    return int(status or 0)


if __name__ == '__main__':
    sys.exit(main())
