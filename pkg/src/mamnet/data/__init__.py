from .clips import (VideoClip, augment, hflip, memory_indices, neighbor_indices, reverse,
                    sample_clip, stack_clips, valid_starts)
from .pnm import PNMError, decode_pnm, encode_pnm, read_pnm, write_mask, write_pnm
from .synthetic import (Shape, SyntheticConfig, Video, gen_synthetic_dataset, generate_dataset,
                        generate_video, list_videos, load_dataset, load_video, save_video)
