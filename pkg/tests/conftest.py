import pytest

from mmtplan.core import DeviceId, ModuleKey, Side, TaskSpec, task_id


def make_task(
    src,
    tgt,
    enc_groups,
    dec_groups,
    enc_layers=None,
    dec_layers=None,
    weight=1,
    intro=0,
    device=None,
    transforms=(),
):
    """Build a TaskSpec from sharing-group names, defaulting layer counts
    to 1 per position."""
    enc_layers = enc_layers or tuple(1 for _ in enc_groups)
    dec_layers = dec_layers or tuple(1 for _ in dec_groups)
    return TaskSpec(
        id=task_id(src, tgt),
        src_lang=src,
        tgt_lang=tgt,
        src_path=f"{src}-{tgt}/train.{src}",
        tgt_path=f"{src}-{tgt}/train.{tgt}",
        enc_modules=tuple(
            ModuleKey(Side.ENCODER, i, g) for i, g in enumerate(enc_groups)
        ),
        dec_modules=tuple(
            ModuleKey(Side.DECODER, i, g) for i, g in enumerate(dec_groups)
        ),
        enc_layers=tuple(enc_layers),
        dec_layers=tuple(dec_layers),
        weight=weight,
        introduce_at_training_step=intro,
        transforms=tuple(transforms),
        device=DeviceId(*device) if isinstance(device, tuple) else device,
    )


@pytest.fixture
def task_factory():
    return make_task
