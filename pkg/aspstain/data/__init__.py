from aspstain.data.dataset import (
    DatasetManifest,
    PairedDataset,
    PairedSample,
    brightness_normalize,
    crop_window,
    epoch_order,
    load_pair,
    load_paired_dataset,
    random_crop_pair,
    random_flip_pair,
)
from aspstain.data.synthetic import SynthConfig, corrupt_ihc, render_structure, stain_map, synth_generate
