//! Scene documents, tabular CSV streams and synthetic city generation.

pub mod scene_file;
pub mod synth;
pub mod tables;

pub use scene_file::{default_layer_tree, load_scene, parse_scene, save_scene, scene_to_string};
pub use synth::{layer_manifest, synth_city, write_to_dir, SynthCity, SynthSpec};
pub use tables::{read_communities, read_flows, read_monitoring, read_traffic};
