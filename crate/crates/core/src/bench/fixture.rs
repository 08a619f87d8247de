//! Synthetic datasets: a small on-disk fixture (manifest, images, cloud
//! store) for end-to-end runs, and a records-only manifest with full-scale
//! statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use super::manifest::{
    area_of, default_aliases, Annotation, CloudRef, ImageRecord, Manifest, QueryRecord, Scene,
    Vocab, AREAS, MANIFEST_SCHEMA_VERSION, SOURCES,
};
use crate::cloudstore::{CloudRecord, StoreError, StoreIndex};
use crate::decision::DEFAULT_NON_AFFORDANCE_ACTIONS;
use crate::geometry::{normalize_cloud, PointCloud};
use crate::types::AffordanceMap;
use crate::util::stable_seed;

pub const OBJECTS: [&str; 22] = [
    "apple", "bed", "blanket", "book", "bottle", "bowl", "cabinet", "chair", "cup", "door", "drawer",
    "faucet", "knife", "lamp", "laptop", "microwave", "mug", "pillow", "refrigerator", "sofa",
    "table", "vase",
];

pub const AFFORDANCES: [&str; 18] = [
    "contain", "cut", "display", "grasp", "lay", "lift", "listen", "move", "open", "pour", "press",
    "pull", "push", "sit", "stab", "support", "wear", "wrap",
];

fn fixture_action_map() -> BTreeMap<String, BTreeSet<String>> {
    let table: [(&str, &[&str]); 22] = [
        ("apple", &["cut", "grasp", "lift"]),
        ("bed", &["lay", "sit", "support"]),
        ("blanket", &["lay", "wear", "wrap"]),
        ("book", &["grasp", "move", "open"]),
        ("bottle", &["contain", "grasp", "lift", "open", "pour", "wrap"]),
        ("bowl", &["contain", "grasp", "pour", "wrap"]),
        ("cabinet", &["contain", "open", "pull", "support"]),
        ("chair", &["lift", "move", "sit", "support"]),
        ("cup", &["contain", "grasp", "lift", "pour", "wrap"]),
        ("door", &["open", "pull", "push"]),
        ("drawer", &["contain", "open", "pull", "push"]),
        ("faucet", &["open", "pour", "press"]),
        ("knife", &["cut", "grasp", "stab"]),
        ("lamp", &["display", "move", "press"]),
        ("laptop", &["display", "listen", "open", "press"]),
        ("microwave", &["contain", "open", "press"]),
        ("mug", &["contain", "grasp", "pour", "wrap"]),
        ("pillow", &["lay", "move", "support"]),
        ("refrigerator", &["contain", "open", "pull"]),
        ("sofa", &["lay", "move", "sit", "support"]),
        ("table", &["move", "support"]),
        ("vase", &["contain", "display", "grasp", "pour", "wrap"]),
    ];
    table
        .iter()
        .map(|(o, acts)| (o.to_string(), acts.iter().map(|a| a.to_string()).collect()))
        .collect()
}

fn area_objects(area: &str) -> &'static [&'static str] {
    match area {
        "Living" => &["sofa", "table", "lamp", "chair", "pillow", "vase", "book"],
        "Dining & Kitchen" => &[
            "table", "chair", "cup", "bowl", "knife", "bottle", "mug", "apple", "refrigerator",
            "microwave", "faucet",
        ],
        "Sleeping" => &["bed", "pillow", "blanket", "lamp", "drawer", "door"],
        "Work & Study" => &["chair", "table", "laptop", "book", "lamp", "mug", "drawer"],
        "Storage" => &["cabinet", "drawer", "door", "bottle", "blanket", "vase"],
        _ => &["faucet", "door", "cabinet", "bottle", "cup"],
    }
}

/// Room types interleaved across areas, so the first six scenes cover all
/// six areas.
pub fn interleaved_room_types() -> Vec<&'static str> {
    let longest = AREAS.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    (0..longest)
        .flat_map(|k| AREAS.iter().filter_map(move |(_, rooms)| rooms.get(k).copied()))
        .collect()
}

fn query_text(action: &str, object: &str) -> String {
    match action {
        "sit" => format!("sit on the {object}"),
        "pour" => format!("pour water into the {object}"),
        "lay" => format!("lay down on the {object}"),
        "listen" => format!("listen to the {object}"),
        _ => format!("{action} the {object}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub scenes: usize,
    pub images_per_scene: usize,
    pub points_per_cloud: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    /// 12 images over 4 scenes.
    fn default() -> Self {
        Self {
            scenes: 4,
            images_per_scene: 3,
            points_per_cloud: 256,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub store: PathBuf,
}

/// Extra queries beyond the per-pair ones: physical acts, an object-less
/// query and incompatible pairs.
const SPECIAL_QUERIES: [(&str, &str, &str, &str); 7] = [
    ("x_give_apple", "give", "apple", "give me an apple"),
    ("x_take_table", "take", "table", "take the table"),
    ("x_bring_cup", "bring", "cup", "bring me the cup"),
    ("x_where_sit", "sit", "sofa", "Where can I sit?"),
    ("x_pour_sofa", "pour", "sofa", "pour water into the sofa"),
    ("x_sit_bottle", "sit", "bottle", "sit on the bottle"),
    ("x_cut_bed", "cut", "bed", "cut the bed"),
];

fn label_region(i: usize) -> [f64; 4] {
    let col = (i % 4) as f64;
    let row = ((i / 4) % 4) as f64;
    [col * 0.25 + 0.02, row * 0.25 + 0.02, col * 0.25 + 0.23, row * 0.25 + 0.23]
}

/// Manifest records of the small fixture. Image paths are
/// `images/<image_id>.png`.
pub fn fixture_manifest(spec: &FixtureSpec) -> Manifest {
    assert!(spec.scenes >= 1 && spec.scenes <= 20, "fixture supports 1..=20 scenes");
    assert!(spec.images_per_scene >= 1);
    let map = fixture_action_map();
    let rooms = interleaved_room_types();

    let mut queries = Vec::new();
    let mut pair_query: BTreeMap<(String, String), String> = BTreeMap::new();
    for (object, acts) in &map {
        for action in acts {
            let id = format!("q{:03}", queries.len());
            pair_query.insert((object.clone(), action.clone()), id.clone());
            queries.push(QueryRecord {
                query_id: id,
                action: action.clone(),
                object: object.clone(),
                text: query_text(action, object),
            });
        }
    }
    for (id, action, object, text) in SPECIAL_QUERIES {
        queries.push(QueryRecord {
            query_id: id.into(),
            action: action.into(),
            object: object.into(),
            text: text.into(),
        });
    }

    let mut rng = Xoshiro256StarStar::seed_from_u64(stable_seed(spec.seed, &["boxes"]));
    let mut scenes = Vec::new();
    let mut images = Vec::new();
    for s in 0..spec.scenes {
        let room = rooms[s];
        let area = area_of(room).expect("taxonomy room");
        let scene_id = format!("scene_{s:02}");
        scenes.push(Scene {
            scene_id: scene_id.clone(),
            room_type: room.into(),
            area: area.into(),
        });
        let pool = area_objects(area);
        for k in 0..spec.images_per_scene {
            let count = (3 + k % 2).min(pool.len());
            let labels: Vec<&str> = (0..count).map(|j| pool[(2 * k + j) % pool.len()]).collect();
            let mut annotations = Vec::new();
            for (j, label) in labels.iter().enumerate() {
                let acts: Vec<&String> = map[*label].iter().collect();
                let n = acts.len().min(3);
                let affordances = (0..n).map(|t| acts[(k + j + t) % acts.len()].clone()).collect();
                let x0 = 0.02 + 0.24 * j as f64 + rng.random_range(0.0..0.02);
                let y0 = rng.random_range(0.05..0.4);
                annotations.push(Annotation {
                    label: label.to_string(),
                    bbox: [x0, y0, x0 + 0.2, y0 + rng.random_range(0.2..0.5)],
                    cloud_id: format!("{label}__00"),
                    affordances,
                });
            }

            let mut applicable: Vec<String> = Vec::new();
            let mut add = |id: &str| {
                if !applicable.iter().any(|x| x == id) {
                    applicable.push(id.to_string());
                }
            };
            for a in &annotations {
                for aff in &a.affordances {
                    add(&pair_query[&(a.label.clone(), aff.clone())]);
                }
            }
            add("x_give_apple");
            if k % 3 == 1 {
                add("x_take_table");
            }
            if labels.contains(&"sofa") && labels.iter().find(|l| map[**l].contains("sit")) == Some(&"sofa") {
                add("x_where_sit");
            }
            for (id, _, object, _) in &SPECIAL_QUERIES[4..] {
                if labels.contains(object) {
                    add(id);
                }
            }
            // one query about an object the image does not show
            let absent: Vec<&String> = pair_query
                .iter()
                .filter(|((o, _), _)| !labels.contains(&o.as_str()))
                .map(|(_, id)| id)
                .collect();
            add(absent[(s * 7 + k * 13) % absent.len()]);

            let image_id = format!("{scene_id}_img{k:02}");
            images.push(ImageRecord {
                path: format!("images/{image_id}.png"),
                image_id,
                scene_id: scene_id.clone(),
                source: SOURCES[(s + k) % SOURCES.len()].into(),
                annotations,
                applicable_query_ids: applicable,
            });
        }
    }

    Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: format!("fixture-{}x{}", spec.scenes, spec.images_per_scene),
        scenes,
        images,
        queries,
        clouds: OBJECTS
            .iter()
            .map(|o| CloudRef {
                cloud_id: format!("{o}__00"),
                label: o.to_string(),
            })
            .collect(),
        object_action_map: map,
        non_affordance_actions: DEFAULT_NON_AFFORDANCE_ACTIONS.iter().map(|s| s.to_string()).collect(),
        action_aliases: default_aliases(),
        label_regions: OBJECTS
            .iter()
            .enumerate()
            .map(|(i, o)| (o.to_string(), label_region(i)))
            .collect(),
        vocab: Vocab {
            objects: OBJECTS.iter().map(|s| s.to_string()).collect(),
            affordances: AFFORDANCES.iter().map(|s| s.to_string()).collect(),
        },
    }
}

fn unit_vector(rng: &mut Xoshiro256StarStar) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Normalized ellipsoid-surface cloud with label-dependent axes.
pub fn synthetic_cloud(label: &str, points: usize, seed: u64) -> PointCloud {
    let mut rng = Xoshiro256StarStar::seed_from_u64(stable_seed(seed, &["cloud", label]));
    let axes: [f64; 3] = [rng.random_range(0.4..1.0), rng.random_range(0.4..1.0), rng.random_range(0.4..1.0)];
    let pts = (0..points.max(4))
        .map(|_| {
            let u = unit_vector(&mut rng);
            [u[0] * axes[0], u[1] * axes[1], u[2] * axes[2]]
        })
        .collect();
    let cloud = PointCloud::new(format!("{label}__00"), pts).expect("finite points");
    normalize_cloud(&cloud).0
}

/// Smooth ground truth: `sigmoid(8 (p·u - b))` for a pseudo-random direction
/// `u` and small offset `b`, so both sides of 0.5 are populated.
pub fn synthetic_map(cloud: &PointCloud, affordance: &str, seed: u64) -> AffordanceMap {
    let mut rng = Xoshiro256StarStar::seed_from_u64(stable_seed(seed, &["map", cloud.id(), affordance]));
    let u = unit_vector(&mut rng);
    let b: f64 = rng.random_range(-0.2..0.2);
    let scores = cloud
        .points()
        .iter()
        .map(|p| {
            let z = 8.0 * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2] - b);
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    AffordanceMap::for_cloud(cloud, affordance, scores).expect("scores in range")
}

/// Store with one cloud per object label and a ground-truth map for each
/// supported affordance.
pub fn fixture_store(manifest: &Manifest, spec: &FixtureSpec) -> Result<StoreIndex, StoreError> {
    let records = manifest.clouds.iter().map(|c| {
        let cloud = synthetic_cloud(&c.label, spec.points_per_cloud, spec.seed);
        let maps = manifest
            .object_action_map
            .get(&c.label)
            .into_iter()
            .flatten()
            .map(|a| synthetic_map(&cloud, a, spec.seed))
            .collect();
        CloudRecord::new(c.label.clone(), cloud, maps, "synthetic")
    });
    StoreIndex::from_records(records.collect::<Result<Vec<_>, _>>()?)
}

fn label_color(label: &str) -> Rgb<u8> {
    let h = stable_seed(0, &["color", label]).to_le_bytes();
    Rgb([h[0] | 0x40, h[1] | 0x40, h[2] | 0x40])
}

/// Flat background with one filled rectangle per annotation.
pub fn render_image(img: &ImageRecord, width: u32, height: u32) -> Vec<u8> {
    let bg = label_color(&img.scene_id);
    let mut canvas = RgbImage::from_pixel(width, height, Rgb([bg[0] / 3, bg[1] / 3, bg[2] / 3]));
    for a in &img.annotations {
        let c = label_color(&a.label);
        let x0 = (a.bbox[0] * width as f64) as u32;
        let y0 = (a.bbox[1] * height as f64) as u32;
        let x1 = ((a.bbox[2] * width as f64) as u32).min(width);
        let y1 = ((a.bbox[3] * height as f64) as u32).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                canvas.put_pixel(x, y, c);
            }
        }
    }
    let mut out = Cursor::new(Vec::new());
    canvas.write_to(&mut out, ImageFormat::Png).expect("png encode");
    out.into_inner()
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Manifest(#[from] super::manifest::ManifestError),
}

/// Writes `manifest.json`, `images/` and `store/` under `root`.
pub fn write_fixture(root: &Path, spec: &FixtureSpec) -> Result<FixturePaths, FixtureError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FixtureError::Io { path, source }
    };
    let manifest = fixture_manifest(spec);
    let images = root.join("images");
    fs::create_dir_all(&images).map_err(io(&images))?;
    for img in &manifest.images {
        let path = root.join(&img.path);
        fs::write(&path, render_image(img, 96, 72)).map_err(io(&path))?;
    }
    let store_dir = root.join("store");
    fixture_store(&manifest, spec)?.save(&store_dir)?;
    let manifest_path = root.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(FixturePaths {
        root: root.to_path_buf(),
        manifest: manifest_path,
        store: store_dir,
    })
}

/// Headline dataset statistics the full-scale synthesizer reproduces.
pub mod full_scale {
    pub const SCENES: usize = 20;
    pub const IMAGES: usize = 9_248;
    pub const QUERIES: usize = 180;
    pub const SOURCE_COUNTS: [usize; 6] = [4591, 1496, 966, 933, 785, 477];
    /// Scenes with one more image than the rest (`8 x 463 + 12 x 462`).
    pub const LARGE_SCENES: usize = 8;
    pub const OBJECT_RICH_SCENES: usize = 7;
    pub const AFFORDANCE_RICH_SCENES: usize = 15;
    pub const QUERY_RICH_SCENES: usize = 10;
    pub const ANNOTATIONS: usize = 50_494;
    pub const AFFORDANCE_PAIRS: usize = 149_078;
    pub const QUERY_LINKS: usize = 1_490_778;
    pub const MAX_OBJECTS_PER_IMAGE: usize = 35;
    pub const MAX_AFFORDANCES_PER_ANNOTATION: usize = 5;
}

/// A records-only manifest (no pixels or clouds on disk) whose statistics
/// match the full benchmark: 20 scenes, 22 objects, 18 affordances, 180
/// queries, 9,248 images in the six-source split.
///
/// Construction: object `o` supports the 7 affordances `o..o+6 (mod 18)`.
/// Scene `s` uses 19 or 20 consecutive labels starting at `s`, an allowed
/// affordance set missing 1 or 2 labels, and a window of 167 or 168 of the
/// 180 queries. Annotation counts per image are 5 or 6 except the first two
/// images, which carry the extremes (35 annotations of 5 affordances, and a
/// single annotation with one affordance). Labels, affordances and query
/// windows rotate so every allowed value is used in each scene.
pub fn full_statistics_manifest() -> Manifest {
    use full_scale::*;
    let n_obj = OBJECTS.len();
    let n_aff = AFFORDANCES.len();
    let map: BTreeMap<String, BTreeSet<String>> = OBJECTS
        .iter()
        .enumerate()
        .map(|(o, name)| {
            let acts = (0..7).map(|k| AFFORDANCES[(o + k) % n_aff].to_string()).collect();
            (name.to_string(), acts)
        })
        .collect();
    let queries: Vec<QueryRecord> = (0..QUERIES)
        .map(|j| {
            let action = AFFORDANCES[j % n_aff];
            let object = OBJECTS[j % n_obj];
            QueryRecord {
                query_id: format!("q{j:03}"),
                action: action.into(),
                object: object.into(),
                text: query_text(action, object),
            }
        })
        .collect();
    let rooms = interleaved_room_types();

    // per-image annotation counts over all images in order
    let base_images = IMAGES - 2;
    let base_annotations = ANNOTATIONS - MAX_OBJECTS_PER_IMAGE - 1;
    let six_count = base_annotations - 5 * base_images;
    // per-annotation affordance counts (after the two special images)
    let base_pairs = AFFORDANCE_PAIRS - MAX_OBJECTS_PER_IMAGE * MAX_AFFORDANCES_PER_ANNOTATION - 1;
    let three_count = base_pairs - 2 * base_annotations;
    // per-image applicable query counts
    let long_windows = QUERY_LINKS - 161 * IMAGES;

    let mut source_of = Vec::with_capacity(IMAGES);
    for (s, &count) in SOURCE_COUNTS.iter().enumerate() {
        source_of.extend(std::iter::repeat_n(SOURCES[s], count));
    }

    let mut scenes = Vec::new();
    let mut images = Vec::with_capacity(IMAGES);
    let mut image_index = 0usize;
    let mut annotation_index = 0usize;
    for s in 0..SCENES {
        let scene_id = format!("scene_{s:02}");
        let room = rooms[s];
        scenes.push(Scene {
            scene_id: scene_id.clone(),
            room_type: room.into(),
            area: area_of(room).expect("taxonomy room").into(),
        });
        let n_images = if s < LARGE_SCENES { 463 } else { 462 };
        let n_labels = if s < OBJECT_RICH_SCENES { 20 } else { 19 };
        let labels: Vec<usize> = (0..n_labels).map(|j| (s + j) % n_obj).collect();
        let excluded: BTreeSet<usize> = if s < AFFORDANCE_RICH_SCENES {
            [(s * 5) % n_aff].into()
        } else {
            [(s * 5) % n_aff, (s * 5 + 1) % n_aff].into()
        };
        let n_queries = if s < QUERY_RICH_SCENES { 168 } else { 167 };
        let scene_queries: Vec<usize> = (0..n_queries).map(|j| (s * 9 + j) % QUERIES).collect();
        // rotating position per label and in the label cycle
        let mut aff_cursor: BTreeMap<usize, usize> = BTreeMap::new();
        let mut label_cursor = 0usize;

        for k in 0..n_images {
            let n_ann = match image_index {
                0 => MAX_OBJECTS_PER_IMAGE,
                1 => 1,
                i if i - 2 < six_count => 6,
                _ => 5,
            };
            let mut annotations = Vec::with_capacity(n_ann);
            for _ in 0..n_ann {
                let o = labels[label_cursor % labels.len()];
                label_cursor += 1;
                let allowed: Vec<usize> = (0..7)
                    .map(|k| (o + k) % n_aff)
                    .filter(|a| !excluded.contains(a))
                    .collect();
                let n_affs = match image_index {
                    0 => MAX_AFFORDANCES_PER_ANNOTATION,
                    1 => 1,
                    _ if annotation_index < three_count => 3,
                    _ => 2,
                };
                if image_index >= 2 {
                    annotation_index += 1;
                }
                let cursor = aff_cursor.entry(o).or_default();
                let affordances = (0..n_affs)
                    .map(|t| AFFORDANCES[allowed[(*cursor + t) % allowed.len()]].to_string())
                    .collect();
                *cursor += n_affs;
                let label = OBJECTS[o];
                annotations.push(Annotation {
                    label: label.into(),
                    bbox: [0.1, 0.1, 0.9, 0.9],
                    cloud_id: format!("{label}__00"),
                    affordances,
                });
            }
            let n_q = if image_index < long_windows { 162 } else { 161 };
            let start = (k * 37) % n_queries;
            let applicable = (0..n_q)
                .map(|t| queries[scene_queries[(start + t) % n_queries]].query_id.clone())
                .collect();
            let image_id = format!("{scene_id}_img{k:03}");
            images.push(ImageRecord {
                path: format!("images/{image_id}.jpg"),
                image_id,
                scene_id: scene_id.clone(),
                source: source_of[image_index].into(),
                annotations,
                applicable_query_ids: applicable,
            });
            image_index += 1;
        }
    }

    Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: "full-statistics".into(),
        scenes,
        images,
        queries,
        clouds: OBJECTS
            .iter()
            .map(|o| CloudRef {
                cloud_id: format!("{o}__00"),
                label: o.to_string(),
            })
            .collect(),
        object_action_map: map,
        non_affordance_actions: DEFAULT_NON_AFFORDANCE_ACTIONS.iter().map(|s| s.to_string()).collect(),
        action_aliases: default_aliases(),
        label_regions: BTreeMap::new(),
        vocab: Vocab {
            objects: OBJECTS.iter().map(|s| s.to_string()).collect(),
            affordances: AFFORDANCES.iter().map(|s| s.to_string()).collect(),
        },
    }
}

/// A named corruption of a valid manifest and the location the validator
/// must report.
pub struct Mutation {
    pub name: &'static str,
    pub apply: fn(&mut Manifest),
    pub expected_path: &'static str,
}

fn unsupported_affordance(m: &mut Manifest) {
    let label = m.images[0].annotations[0].label.clone();
    let supported = m.object_action_map.get(&label).cloned().unwrap_or_default();
    let extra = m
        .vocab
        .affordances
        .iter()
        .find(|a| !supported.contains(*a))
        .expect("some affordance is unsupported")
        .clone();
    m.images[0].annotations[0].affordances.insert(0, extra);
}

fn other_area(m: &mut Manifest) {
    let current = m.scenes[0].area.clone();
    let other = AREAS.iter().map(|(a, _)| *a).find(|a| *a != current).unwrap();
    m.scenes[0].area = other.into();
}

/// The ten canonical corruptions. Each needs at least two images.
pub fn canonical_mutations() -> Vec<Mutation> {
    vec![
        Mutation {
            name: "dangling scene_id",
            apply: |m| m.images[0].scene_id = "scene_missing".into(),
            expected_path: "images[0].scene_id",
        },
        Mutation {
            name: "dangling cloud_id",
            apply: |m| m.images[0].annotations[0].cloud_id = "ghost__00".into(),
            expected_path: "images[0].annotations[0].cloud_id",
        },
        Mutation {
            name: "dangling query_id",
            apply: |m| m.images[0].applicable_query_ids.insert(0, "q_missing".into()),
            expected_path: "images[0].applicable_query_ids[0]",
        },
        Mutation {
            name: "bad source",
            apply: |m| m.images[0].source = "Flickr".into(),
            expected_path: "images[0].source",
        },
        Mutation {
            name: "area mismatch",
            apply: other_area,
            expected_path: "scenes[0].area",
        },
        Mutation {
            name: "unknown room type",
            apply: |m| m.scenes[0].room_type = "ballroom".into(),
            expected_path: "scenes[0].room_type",
        },
        Mutation {
            name: "inverted bbox",
            apply: |m| m.images[0].annotations[0].bbox = [0.6, 0.1, 0.2, 0.5],
            expected_path: "images[0].annotations[0].bbox",
        },
        Mutation {
            name: "label outside vocabulary",
            apply: |m| m.images[0].annotations[0].label = "unicorn".into(),
            expected_path: "images[0].annotations[0].label",
        },
        Mutation {
            name: "unsupported affordance",
            apply: unsupported_affordance,
            expected_path: "images[0].annotations[0].affordances[0]",
        },
        Mutation {
            name: "duplicate image_id",
            apply: |m| m.images[1].image_id = m.images[0].image_id.clone(),
            expected_path: "images[1].image_id",
        },
    ]
}
