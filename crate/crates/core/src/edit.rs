//! Scene editing with an undo-capable change journal.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationReport};
use crate::scene::{Building, CityScene};
use crate::traffic::RoadSegment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    AddBuilding { building: Building },
    UpdateBuilding { building: Building },
    DeleteBuilding { id: String },
    AddRoad { road: RoadSegment },
    UpdateRoad { road: RoadSegment },
    DeleteRoad { id: String },
}

/// Scene collection touched by an edit; its spatial index goes stale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Buildings,
    Roads,
}

impl Edit {
    pub fn collection(&self) -> Collection {
        match self {
            Edit::AddBuilding { .. } | Edit::UpdateBuilding { .. } | Edit::DeleteBuilding { .. } => {
                Collection::Buildings
            }
            Edit::AddRoad { .. } | Edit::UpdateRoad { .. } | Edit::DeleteRoad { .. } => Collection::Roads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub edit: Edit,
    /// Applying this to the resulting scene restores the previous one.
    pub inverse: Edit,
    pub collection: Collection,
}

/// Applies one edit, returning the new scene and the journal entry.
pub fn apply_edit(scene: &CityScene, edit: &Edit) -> Result<(CityScene, JournalEntry)> {
    let mut parts = scene.parts().clone();
    let inverse = match edit {
        Edit::AddBuilding { building } => {
            check_valid(building.violations())?;
            let at = insert_pos(&parts.buildings, &building.id, |b| &b.id)
                .ok_or_else(|| Error::conflict("building", &building.id))?;
            parts.buildings.insert(at, building.clone());
            Edit::DeleteBuilding { id: building.id.clone() }
        }
        Edit::UpdateBuilding { building } => {
            check_valid(building.violations())?;
            let at = existing_pos(&parts.buildings, &building.id, |b| &b.id)
                .ok_or_else(|| Error::not_found("building", &building.id))?;
            let old = std::mem::replace(&mut parts.buildings[at], building.clone());
            Edit::UpdateBuilding { building: old }
        }
        Edit::DeleteBuilding { id } => {
            let at = existing_pos(&parts.buildings, id, |b| &b.id).ok_or_else(|| Error::not_found("building", id))?;
            check_unreferenced(scene, id)?;
            Edit::AddBuilding { building: parts.buildings.remove(at) }
        }
        Edit::AddRoad { road } => {
            check_valid(road.violations())?;
            let at = insert_pos(&parts.roads, &road.id, |r| &r.id).ok_or_else(|| Error::conflict("road", &road.id))?;
            parts.roads.insert(at, road.clone());
            Edit::DeleteRoad { id: road.id.clone() }
        }
        Edit::UpdateRoad { road } => {
            check_valid(road.violations())?;
            let at =
                existing_pos(&parts.roads, &road.id, |r| &r.id).ok_or_else(|| Error::not_found("road", &road.id))?;
            let old = std::mem::replace(&mut parts.roads[at], road.clone());
            Edit::UpdateRoad { road: old }
        }
        Edit::DeleteRoad { id } => {
            let at = existing_pos(&parts.roads, id, |r| &r.id).ok_or_else(|| Error::not_found("road", id))?;
            check_unreferenced(scene, id)?;
            Edit::AddRoad { road: parts.roads.remove(at) }
        }
    };
    let entry = JournalEntry { edit: edit.clone(), inverse, collection: edit.collection() };
    Ok((CityScene::from_valid_parts(parts), entry))
}

fn check_valid(violations: Vec<crate::error::Violation>) -> Result<()> {
    ValidationReport { violations }.into_result()
}

fn check_unreferenced(scene: &CityScene, id: &str) -> Result<()> {
    let mut referenced = false;
    scene.layer_root().walk(&mut |n| referenced |= n.target.as_deref() == Some(id));
    if referenced {
        return Err(Error::conflict("layer reference", id));
    }
    Ok(())
}

fn insert_pos<T>(items: &[T], id: &str, key: impl Fn(&T) -> &String) -> Option<usize> {
    items.binary_search_by(|x| key(x).as_str().cmp(id)).err()
}

fn existing_pos<T>(items: &[T], id: &str, key: impl Fn(&T) -> &String) -> Option<usize> {
    items.binary_search_by(|x| key(x).as_str().cmp(id)).ok()
}

/// A scene plus its edit history and the set of collections whose indices
/// need rebuilding.
#[derive(Debug, Clone)]
pub struct EditSession {
    scene: CityScene,
    journal: Vec<JournalEntry>,
    stale: BTreeSet<Collection>,
}

impl EditSession {
    pub fn new(scene: CityScene) -> Self {
        Self { scene, journal: Vec::new(), stale: BTreeSet::new() }
    }

    pub fn scene(&self) -> &CityScene {
        &self.scene
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn apply(&mut self, edit: &Edit) -> Result<&JournalEntry> {
        let (scene, entry) = apply_edit(&self.scene, edit)?;
        self.scene = scene;
        self.stale.insert(entry.collection);
        self.journal.push(entry);
        Ok(self.journal.last().expect("just pushed"))
    }

    /// Reverts the most recent edit. Returns `false` when the journal is empty.
    pub fn undo(&mut self) -> Result<bool> {
        let Some(entry) = self.journal.pop() else {
            return Ok(false);
        };
        let (scene, _) = apply_edit(&self.scene, &entry.inverse)?;
        self.scene = scene;
        self.stale.insert(entry.collection);
        Ok(true)
    }

    pub fn is_stale(&self, c: Collection) -> bool {
        self.stale.contains(&c)
    }

    /// Called by the index owner after rebuilding.
    pub fn mark_fresh(&mut self, c: Collection) {
        self.stale.remove(&c);
    }
}
