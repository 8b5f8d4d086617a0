use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::occlusion_ratio;
use super::DishError;

/// Objects whose mutual occlusion ratio exceeds this are merge candidates.
pub const MERGE_RATIO: f64 = 0.5;
/// Merge candidates must have centroids closer than this (meters).
pub const MERGE_DISTANCE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: u32,
    /// Table-plane position in meters.
    pub centroid: [f64; 2],
    /// Contour perimeter in pixels.
    pub perimeter: u32,
    /// Ground-truth attribute; only the simulator reads it.
    pub dirty: bool,
}

/// `occluder` is nearer the sensor and hides `tou` pixels of the contour of
/// `occluded`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub occluder: u32,
    pub occluded: u32,
    pub tou: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub contacts: Vec<Contact>,
}

/// One merge performed by [`merge_objects_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct MergeEvent {
    pub kept: u32,
    pub absorbed: u32,
    pub ratio: f64,
    pub distance: f64,
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<SceneSpec, DishError> {
        let scene: SceneSpec =
            toml::from_str(text).map_err(|e| DishError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<SceneSpec, DishError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DishError::Io(format!("{}: {e}", path.display())))?;
        SceneSpec::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), DishError> {
        let invalid = |msg: String| Err(DishError::InvalidScene(msg));
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return invalid(format!("duplicate object id {}", o.id));
            }
            if o.perimeter == 0 {
                return invalid(format!("object {} has zero perimeter", o.id));
            }
            if !o.centroid.iter().all(|c| c.is_finite()) {
                return invalid(format!("object {} has a non-finite centroid", o.id));
            }
        }
        let mut pairs = BTreeSet::new();
        for c in &self.contacts {
            for end in [c.occluder, c.occluded] {
                if !ids.contains(&end) {
                    return invalid(format!(
                        "contact {} -> {} references unknown object {end}",
                        c.occluder, c.occluded
                    ));
                }
            }
            if c.occluder == c.occluded {
                return invalid(format!("object {} occludes itself", c.occluder));
            }
            if !pairs.insert((c.occluder, c.occluded)) {
                return invalid(format!(
                    "duplicate contact {} -> {}",
                    c.occluder, c.occluded
                ));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Occlusion ratio of `id` with every occluder in place.
    pub fn base_occlusion(&self, id: u32) -> f64 {
        let Some(o) = self.object(id) else {
            return 0.0;
        };
        let tou: u64 = self
            .contacts
            .iter()
            .filter(|c| c.occluded == id)
            .map(|c| c.tou as u64)
            .sum();
        occlusion_ratio(o.perimeter as f64, tou as f64)
    }
}

fn distance(a: &SceneObject, b: &SceneObject) -> f64 {
    (a.centroid[0] - b.centroid[0]).hypot(a.centroid[1] - b.centroid[1])
}

/// Merges occluder/occluded pairs that are both strongly overlapping and
/// close, until no such pair remains. See [`merge_objects_traced`].
pub fn merge_objects(scene: &SceneSpec) -> Result<SceneSpec, DishError> {
    merge_objects_traced(scene).map(|(s, _)| s)
}

/// Repeatedly merges the first contact (in occluder, occluded id order) whose
/// pairwise occlusion ratio exceeds [`MERGE_RATIO`] and whose centroids are
/// closer than [`MERGE_DISTANCE`].
///
/// The merged object keeps the smaller id, a perimeter-weighted centroid and
/// the perimeter `TOT_A + TOT_B - 2 * TOU_AB`, where `TOU_AB` counts contacts
/// in both directions. Contacts are re-pointed, self contacts dropped and
/// parallel contacts summed. Dirtiness is the logical OR.
pub fn merge_objects_traced(scene: &SceneSpec) -> Result<(SceneSpec, Vec<MergeEvent>), DishError> {
    scene.validate()?;
    let mut scene = scene.clone();
    let mut events = Vec::new();
    loop {
        let mut contacts = scene.contacts.clone();
        contacts.sort_by_key(|c| (c.occluder, c.occluded));
        let candidate = contacts.iter().find_map(|c| {
            let a = scene.object(c.occluder)?;
            let b = scene.object(c.occluded)?;
            let ratio = occlusion_ratio(b.perimeter as f64, c.tou as f64);
            let dist = distance(a, b);
            (ratio > MERGE_RATIO && dist < MERGE_DISTANCE).then_some((a.id, b.id, ratio, dist))
        });
        let Some((a, b, ratio, dist)) = candidate else {
            break;
        };
        let (kept, absorbed) = (a.min(b), a.max(b));
        scene = merge_pair(&scene, kept, absorbed)?;
        events.push(MergeEvent {
            kept,
            absorbed,
            ratio,
            distance: dist,
        });
    }
    Ok((scene, events))
}

fn merge_pair(scene: &SceneSpec, kept: u32, absorbed: u32) -> Result<SceneSpec, DishError> {
    let a = scene.object(kept).expect("kept object exists");
    let b = scene.object(absorbed).expect("absorbed object exists");
    let shared: i64 = scene
        .contacts
        .iter()
        .filter(|c| {
            (c.occluder == kept && c.occluded == absorbed)
                || (c.occluder == absorbed && c.occluded == kept)
        })
        .map(|c| c.tou as i64)
        .sum();
    let perimeter = a.perimeter as i64 + b.perimeter as i64 - 2 * shared;
    if perimeter <= 0 {
        return Err(DishError::InvalidScene(format!(
            "merging objects {kept} and {absorbed} leaves perimeter {perimeter}"
        )));
    }
    let (wa, wb) = (a.perimeter as f64, b.perimeter as f64);
    let merged = SceneObject {
        id: kept,
        centroid: [
            (wa * a.centroid[0] + wb * b.centroid[0]) / (wa + wb),
            (wa * a.centroid[1] + wb * b.centroid[1]) / (wa + wb),
        ],
        perimeter: u32::try_from(perimeter).map_err(|_| {
            DishError::InvalidScene(format!("merged perimeter {perimeter} overflows"))
        })?,
        dirty: a.dirty || b.dirty,
    };
    let objects = scene
        .objects
        .iter()
        .filter(|o| o.id != absorbed)
        .map(|o| if o.id == kept { merged.clone() } else { o.clone() })
        .collect();
    let remap = |id: u32| if id == absorbed { kept } else { id };
    let mut summed: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for c in &scene.contacts {
        let (from, to) = (remap(c.occluder), remap(c.occluded));
        if from != to {
            *summed.entry((from, to)).or_default() += c.tou as u64;
        }
    }
    let contacts = summed
        .into_iter()
        .map(|((occluder, occluded), tou)| Contact {
            occluder,
            occluded,
            tou: tou.min(u32::MAX as u64) as u32,
        })
        .collect();
    Ok(SceneSpec { objects, contacts })
}

/// Synthetic scenes shipped with the crate, by name.
pub const BUNDLED_SCENES: [(&str, &str); 11] = [
    ("scene01", include_str!("../../scenes/scene01.toml")),
    ("scene02", include_str!("../../scenes/scene02.toml")),
    ("scene03", include_str!("../../scenes/scene03.toml")),
    ("scene04", include_str!("../../scenes/scene04.toml")),
    ("scene05", include_str!("../../scenes/scene05.toml")),
    ("scene06", include_str!("../../scenes/scene06.toml")),
    ("scene07", include_str!("../../scenes/scene07.toml")),
    ("scene08", include_str!("../../scenes/scene08.toml")),
    ("scene09", include_str!("../../scenes/scene09.toml")),
    ("scene10", include_str!("../../scenes/scene10.toml")),
    ("occluded_dirty", include_str!("../../scenes/occluded_dirty.toml")),
];

/// Names of the ten table scenes used for batch comparisons.
pub fn table_scene_names() -> impl Iterator<Item = &'static str> {
    BUNDLED_SCENES[..10].iter().map(|(n, _)| *n)
}

pub fn bundled_scene(name: &str) -> Option<SceneSpec> {
    BUNDLED_SCENES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| SceneSpec::parse(text).expect("bundled scenes are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: u32, x: f64, perimeter: u32, dirty: bool) -> SceneObject {
        SceneObject {
            id,
            centroid: [x, 0.0],
            perimeter,
            dirty,
        }
    }

    fn pair(dist: f64, tou: u32) -> SceneSpec {
        SceneSpec {
            objects: vec![obj(1, 0.0, 100, false), obj(2, dist, 100, true)],
            contacts: vec![Contact {
                occluder: 1,
                occluded: 2,
                tou,
            }],
        }
    }

    #[test]
    fn empty_scene_is_valid() {
        let s = SceneSpec::parse("objects = []\n").unwrap();
        assert!(s.objects.is_empty());
        assert!(SceneSpec::parse("").unwrap().objects.is_empty());
    }

    #[test]
    fn validation_errors() {
        let dangling = "[[objects]]\nid = 1\ncentroid = [0.0, 0.0]\nperimeter = 10\ndirty = false\n\
                        [[contacts]]\noccluder = 1\noccluded = 7\ntou = 3\n";
        assert!(matches!(SceneSpec::parse(dangling), Err(DishError::InvalidScene(_))));
        let mut dup = pair(0.1, 10);
        dup.objects[1].id = 1;
        assert!(dup.validate().is_err());
        let mut zero = pair(0.1, 10);
        zero.objects[0].perimeter = 0;
        assert!(zero.validate().is_err());
        let unknown = "[[objects]]\nid = 1\ncentroid = [0.0, 0.0]\nperimeter = 10\ndirty = false\ncolor = 3\n";
        assert!(matches!(SceneSpec::parse(unknown), Err(DishError::Parse(_))));
        let negative = "[[objects]]\nid = 1\ncentroid = [0.0, 0.0]\nperimeter = -10\ndirty = false\n";
        assert!(matches!(SceneSpec::parse(negative), Err(DishError::Parse(_))));
    }

    #[test]
    fn bundled_scenes_round_trip() {
        for (name, _) in BUNDLED_SCENES {
            let s = bundled_scene(name).unwrap();
            assert_eq!(SceneSpec::parse(&s.to_toml()).unwrap(), s, "{name}");
        }
        let s = bundled_scene("scene01").unwrap();
        assert_eq!(s.objects.len(), 8);
        assert_eq!(s.objects.iter().filter(|o| o.dirty).count(), 4);
    }

    #[test]
    fn merge_without_contacts_is_identity() {
        let s = SceneSpec {
            objects: vec![obj(1, 0.0, 100, false), obj(2, 0.01, 100, true)],
            contacts: vec![],
        };
        assert_eq!(merge_objects(&s).unwrap(), s);
    }

    #[test]
    fn merge_close_overlapping_pair() {
        // 60 of 100 pixels touching: ratio saturates at 1 > 0.5.
        let (merged, events) = merge_objects_traced(&pair(0.05, 60)).unwrap();
        assert_eq!(merged.objects.len(), 1);
        assert_eq!(events.len(), 1);
        let o = &merged.objects[0];
        assert_eq!(o.id, 1);
        assert_eq!(o.perimeter, 80);
        assert!(o.dirty);
        assert!((o.centroid[0] - 0.025).abs() < 1e-12);
        assert!(merged.contacts.is_empty());
    }

    #[test]
    fn ratio_just_above_threshold_merges() {
        // 38/(100-38) = 0.613
        assert_eq!(merge_objects(&pair(0.05, 38)).unwrap().objects.len(), 1);
        // 30/70 = 0.43
        assert_eq!(merge_objects(&pair(0.05, 30)).unwrap().objects.len(), 2);
    }

    #[test]
    fn distant_pair_is_not_merged() {
        let s = pair(0.09, 60);
        assert_eq!(merge_objects(&s).unwrap(), s);
    }

    #[test]
    fn merge_rewires_and_sums_contacts() {
        let s = SceneSpec {
            objects: vec![
                obj(1, 0.0, 100, false),
                obj(2, 0.02, 100, false),
                obj(3, 0.3, 100, false),
            ],
            contacts: vec![
                Contact {
                    occluder: 2,
                    occluded: 1,
                    tou: 60,
                },
                Contact {
                    occluder: 1,
                    occluded: 3,
                    tou: 5,
                },
                Contact {
                    occluder: 2,
                    occluded: 3,
                    tou: 7,
                },
            ],
        };
        let m = merge_objects(&s).unwrap();
        assert_eq!(m.objects.len(), 2);
        assert_eq!(
            m.contacts,
            vec![Contact {
                occluder: 1,
                occluded: 3,
                tou: 12
            }]
        );
    }

    #[test]
    fn merge_to_nonpositive_perimeter_fails() {
        let mut s = pair(0.01, 100);
        s.objects[0].perimeter = 50;
        s.objects[1].perimeter = 100;
        assert!(merge_objects(&s).is_err());
    }
}
