import logging
from pathlib import Path
from typing import Optional
from typing_extensions import override

import torch
from django.conf import settings
from django.core.management.base import BaseCommand

from app.decorators import command_exception_handler
from app.exceptions import BadRequestException
from app.str_tools import isBlank, split_list
from architectures.models import ModelSpec, ARCH_OPTIONS
from data.daos import load_dataset
from data.folds import VAL_POLICY_OPTIONS, VAL_POLICY_STRATIFIED, VAL_FRACTION
from data.models import SensorDataset
from data.synthetic import generate_synthetic
from data.windowing import TRAIN_OVERLAP, TEST_OVERLAP
from protocol.models import TrainingProtocol


SYNTHETIC_DATASET = 'synth'
# desk-scale synthetic suite used when --dataset synth
SYNTHETIC_DEFAULTS = {
    'n_subjects': 6,
    'n_channels': 3,
    'n_classes': 4,
    'length': 2048,
    'freq': 50.0,
    'window_length': 64,
}


class HarbenchCommand(BaseCommand):
    """ inherit this class to create a harbench command,
    includes the shared flags and error handling """

    # commands that do not train set this to False to skip the --protocol flag
    uses_protocol = True

    @override
    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.add_argument('--seed', type=int, default=None,
                            help='random seed for data, initialisation and shuffling, defaults to the protocol seed')
        parser.add_argument('--out-dir', default=None, help='directory for every artifact written by this command')
        if self.uses_protocol:
            parser.add_argument('--protocol', default=None,
                                help='protocol json file or preset name (cv-baseline, comm, new)')
        return parser

    @override
    @command_exception_handler
    def execute(self, *args, **options):
        torch.set_num_threads(settings.HARBENCH_TORCH_THREADS)
        return super().execute(*args, **options)

    def out_dir(self, options: dict, default_name: str) -> Path:
        """ resolves --out-dir, falling back to <HARBENCH_OUT_DIR>/<default_name> """
        if not isBlank(options.get('out_dir')):
            out_dir = Path(options['out_dir'])
        else:
            out_dir = Path(settings.HARBENCH_OUT_DIR) / default_name
        out_dir.mkdir(parents=True, exist_ok=True)
        logging.info(f"writing artifacts to {out_dir}")
        return out_dir

    @staticmethod
    def seed(options: dict, protocol: Optional[TrainingProtocol] = None) -> int:
        """ resolves --seed, falling back to the seed the protocol declares """
        if options.get('seed') is not None:
            return options['seed']
        return protocol.seed if protocol is not None else 0

    @staticmethod
    def seeds(options: dict, protocol: Optional[TrainingProtocol] = None) -> list[int]:
        """ resolves --seeds, falling back to the seeds the protocol recorded, then HARBENCH_SEEDS """
        raw = options.get('seeds')
        if not isBlank(raw):
            try:
                return [int(seed) for seed in split_list(raw)]
            except ValueError:
                raise BadRequestException(f'--seeds must be comma separated integers, got {raw}')
        if protocol is not None and protocol.seed_list():
            return protocol.seed_list()
        return list(settings.HARBENCH_SEEDS)

    @staticmethod
    def workers(options: dict) -> int:
        workers = options.get('workers')
        if workers is None:
            workers = settings.HARBENCH_WORKERS
        if workers < 1:
            raise BadRequestException(f'--workers must be at least 1, got {workers}')
        return workers

    @staticmethod
    def add_dataset_arguments(parser):
        parser.add_argument('--dataset', default=SYNTHETIC_DATASET,
                            help=f'dataset directory, or "{SYNTHETIC_DATASET}" for the generated desk-scale suite')
        parser.add_argument('--val-policy', default=VAL_POLICY_STRATIFIED, choices=VAL_POLICY_OPTIONS,
                            help='how the validation windows are drawn from the training subjects')

    @staticmethod
    def dataset(options: dict, seed: int = 0) -> SensorDataset:
        """ loads --dataset, generating the synthetic suite from seed when asked for """
        reference = options.get('dataset') or SYNTHETIC_DATASET
        if reference in (SYNTHETIC_DATASET, 'synthetic'):
            return generate_synthetic(seed=seed, **SYNTHETIC_DEFAULTS)
        return load_dataset(reference)

    @staticmethod
    def model_spec(arch: str, dataset: SensorDataset) -> ModelSpec:
        if isBlank(arch) or arch.strip().upper() not in ARCH_OPTIONS:
            raise BadRequestException(f'unknown model {arch}, options: {ARCH_OPTIONS}')
        meta = dataset.meta
        return ModelSpec({'arch': arch, 'window_length': meta.window_length,
                          'n_channels': meta.n_channels, 'n_classes': meta.n_classes})

    @staticmethod
    def resolved_protocol(protocol: TrainingProtocol, dataset: SensorDataset, model_spec: ModelSpec,
                          val_policy: str) -> TrainingProtocol:
        """ protocol with its descriptive context filled in from what actually runs """
        if val_policy == VAL_POLICY_STRATIFIED:
            validation = f'{VAL_FRACTION:.0%} of training windows per class held out for validation'
        else:
            validation = 'the next subject after the test subject held out for validation'
        return protocol.replace(
            dataset=dataset.meta.describe(),
            model=model_spec.describe(),
            preprocessing=(f'sliding windows of {dataset.meta.window_length} samples, {TRAIN_OVERLAP:.0%} overlap '
                           f'for training and {TEST_OVERLAP:.0%} for testing; per-channel z-score from training '
                           f'windows'),
            validation=f'leave-one-subject-out cross-validation; {validation}',
        )

    @staticmethod
    def procedure_name(reference: str | None, protocol: Optional[TrainingProtocol], default: str) -> str:
        """ label for a procedure: the name the document records, else the preset name or the file stem """
        if protocol is not None and not isBlank(protocol.procedure):
            return protocol.procedure
        if isBlank(reference):
            return default
        return Path(reference).stem
