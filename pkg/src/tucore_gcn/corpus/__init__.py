from .dialogre import CorpusStats, import_dialogre, label_map_from_files, parse_turn, summarize
from .erc import anonymize_speakers, assign_alternating_speakers, erc_to_re
from .io import DataError, labels_in, read_dataset, read_erc, write_dataset, write_erc
from .synthetic import FAMILIES, SynthConfig, family_of, gen_synthetic
from .types import Dialogue, ErcUtteranceRecord, LabelMap, RelationInstance, Turn
