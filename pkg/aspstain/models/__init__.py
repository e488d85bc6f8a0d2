from aspstain.models.checkpoint import (
    CHECKPOINT_FORMAT_VERSION,
    load_checkpoint,
    load_generator,
    load_networks,
    restore_modules,
    save_checkpoint,
)
from aspstain.models.networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    IdentityGenerator,
    PatchDiscriminator,
    PatchProjector,
    ProjectorSpec,
    ResnetGenerator,
    TranslationNetworks,
    build_generator,
    build_networks,
    discriminator_output_size,
    project_patches,
    sample_locations,
)
