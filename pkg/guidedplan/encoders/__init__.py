from .map_encoder import MapEncoder, map_adapter
from .camera import (PositionalEncoder3D, build_3d_positional_encoding, project, unproject, unproject_grid, select_views,
                     cell_centers, optical_to_ego)
from .image import (ImageDescriptors, ImageFeatureVolume, ImageFeaturizer, RefQueries, Aggregator3D, rasterize,
                    synth_image_features, aggregate_3d_aware, img_adapter, DESCRIPTOR_CLASSES, DESCRIPTOR_DIM)
