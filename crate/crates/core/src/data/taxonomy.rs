use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 16;

/// Per-class image counts of the reference collection, in class-id order.
/// The final entry (`OW.`) has no recorded count and uses the
/// reported per-species average of 600.
pub const TABLE1_COUNTS: [usize; NUM_CLASSES] = [
    659, 655, 560, 990, 631, 428, 625, 549, 1474, 649, 526, 566, 565, 704, 559, 600,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: usize,
    pub short: String,
    pub full: String,
}

impl ClassInfo {
    /// Directory name used when ingesting an image tree: the short name in
    /// lower case without the trailing period (`"Neg."` -> `"neg"`).
    pub fn dir_name(&self) -> String {
        self.short.trim_end_matches('.').to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    classes: Vec<ClassInfo>,
    negative_class_id: usize,
    crop_class_id: usize,
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self::aiweeds()
    }
}

impl ClassTaxonomy {
    /// 14 weeds, flax and negatives.
    pub fn aiweeds() -> Self {
        const NAMES: [(&str, &str); NUM_CLASSES] = [
            ("AS.", "Amaranthus spinosus"),
            ("BS.", "Brachypodium sylvaticum"),
            ("CT.", "Canada thistle"),
            ("CA.", "Cirsium arvense"),
            ("CD.", "Cynodon dactylon"),
            ("D.", "Dandelion"),
            ("Flax", "Flax"),
            ("L.", "Lambsquarters"),
            ("Neg.", "Negatives"),
            ("N.", "Nutsedge"),
            ("PM.", "Plantago major"),
            ("SF.", "Setaria faberi"),
            ("SA.", "Sonchus arvensis"),
            ("VM.", "Venus mallow"),
            ("VP.", "Verdolagas purslane"),
            ("OW.", "Other weed"),
        ];
        let classes = NAMES
            .iter()
            .enumerate()
            .map(|(id, (short, full))| ClassInfo {
                id,
                short: (*short).into(),
                full: (*full).into(),
            })
            .collect();
        Self::new(classes, 8, 6).expect("built-in taxonomy is valid")
    }

    pub fn new(classes: Vec<ClassInfo>, negative_class_id: usize, crop_class_id: usize) -> Result<Self> {
        if classes.len() != NUM_CLASSES {
            return Err(Error::Taxonomy(format!("expected {NUM_CLASSES} classes, got {}", classes.len())));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id != i {
                return Err(Error::Taxonomy(format!("class ids must be dense: position {i} has id {}", c.id)));
            }
            if classes[..i].iter().any(|o| o.short == c.short) {
                return Err(Error::Taxonomy(format!("duplicate short name {}", c.short)));
            }
        }
        if negative_class_id >= NUM_CLASSES || crop_class_id >= NUM_CLASSES || negative_class_id == crop_class_id {
            return Err(Error::Taxonomy(
                "negative and crop ids must be distinct members of the taxonomy".into(),
            ));
        }
        Ok(Self {
            classes,
            negative_class_id,
            crop_class_id,
        })
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn negative_class_id(&self) -> usize {
        self.negative_class_id
    }

    pub fn crop_class_id(&self) -> usize {
        self.crop_class_id
    }

    pub fn short_name(&self, id: usize) -> &str {
        &self.classes[id].short
    }

    pub fn id_of(&self, short: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.short == short)
    }

    /// Resolves either a short name (`"VM."`), its directory form (`"vm"`)
    /// or a numeric id.
    pub fn resolve(&self, name: &str) -> Result<usize> {
        if let Some(id) = self.id_of(name) {
            return Ok(id);
        }
        if let Some(c) = self.classes.iter().find(|c| c.dir_name() == name.to_lowercase()) {
            return Ok(c.id);
        }
        match name.parse::<usize>() {
            Ok(id) if id < NUM_CLASSES => Ok(id),
            _ => Err(Error::Taxonomy(format!("unknown class {name:?}"))),
        }
    }

    pub fn is_weed(&self, id: usize) -> bool {
        id < NUM_CLASSES && id != self.negative_class_id && id != self.crop_class_id
    }

    pub fn weed_ids(&self) -> Vec<usize> {
        (0..NUM_CLASSES).filter(|&i| self.is_weed(i)).collect()
    }

    /// JSON array of `{"id", "short", "full"}` in id order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.classes)?)
    }

    /// Parses a taxonomy file; negative and crop classes are located by the
    /// `Neg.` and `Flax` short names.
    pub fn from_json(text: &str) -> Result<Self> {
        let classes: Vec<ClassInfo> = serde_json::from_str(text)?;
        let find = |short: &str| {
            classes
                .iter()
                .position(|c| c.short == short)
                .ok_or_else(|| Error::Taxonomy(format!("taxonomy file lacks class {short}")))
        };
        let neg = find("Neg.")?;
        let crop = find("Flax")?;
        Self::new(classes, neg, crop)
    }
}
