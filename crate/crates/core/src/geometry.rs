//! Screen bands, key rectangles and point classification.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const DEFAULT_LAYOUT_JSON: &str = include_str!("../assets/default_layout_v1.json");

pub const SPACE: &str = "space";
pub const BACKSPACE: &str = "backspace";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry {
    pub width: f64,
    pub height: f64,
    pub text_area_max_y: f64,
    pub keyboard_min_y: f64,
    pub keyboard_max_y: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        ScreenGeometry {
            width: 1080.0,
            height: 1980.0,
            text_area_max_y: 400.0,
            keyboard_min_y: 1230.0,
            keyboard_max_y: 1980.0,
        }
    }
}

impl ScreenGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0.0
            && self.width.is_finite()
            && 0.0 < self.text_area_max_y
            && self.text_area_max_y < self.keyboard_min_y
            && self.keyboard_min_y < self.keyboard_max_y
            && self.keyboard_max_y <= self.height
            && self.height.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CoreError::invalid("screen geometry", format!("{self:?}")))
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Text,
    Keyboard,
    Other,
}

/// Bands are checked text first, so a point can only ever land in one region.
pub fn region_of(x: f64, y: f64, geom: &ScreenGeometry) -> Region {
    let _ = x;
    if y < geom.text_area_max_y {
        Region::Text
    } else if geom.keyboard_min_y <= y && y <= geom.keyboard_max_y {
        Region::Keyboard
    } else {
        Region::Other
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Key {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Key {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.x <= px && px <= self.x + self.w && self.y <= py && py <= self.y + self.h
    }

    fn overlaps(&self, o: &Key) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    /// The character this key types, if it is a character key.
    pub fn char(&self) -> Option<char> {
        let mut it = self.label.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => Some(c),
            _ if self.label == SPACE => Some(' '),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyboardLayout {
    pub screen: ScreenGeometry,
    pub keys: Vec<Key>,
}

impl Default for KeyboardLayout {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_LAYOUT_JSON).expect("bundled layout parses")
    }
}

impl KeyboardLayout {
    pub fn validate(&self) -> Result<()> {
        self.screen.validate()?;
        for k in &self.keys {
            if !(k.w > 0.0 && k.h > 0.0) {
                return Err(CoreError::invalid("layout", format!("key {:?} has no area", k.label)));
            }
            if k.y < self.screen.keyboard_min_y || k.y + k.h > self.screen.keyboard_max_y {
                return Err(CoreError::invalid(
                    "layout",
                    format!("key {:?} leaves the keyboard band", k.label),
                ));
            }
            if k.x < 0.0 || k.x + k.w > self.screen.width {
                return Err(CoreError::invalid(
                    "layout",
                    format!("key {:?} leaves the screen", k.label),
                ));
            }
        }
        for (i, a) in self.keys.iter().enumerate() {
            for b in &self.keys[i + 1..] {
                if a.label == b.label {
                    return Err(CoreError::invalid("layout", format!("duplicate key {:?}", a.label)));
                }
                if a.overlaps(b) {
                    return Err(CoreError::invalid(
                        "layout",
                        format!("keys {:?} and {:?} overlap", a.label, b.label),
                    ));
                }
            }
        }
        for needed in [SPACE, BACKSPACE] {
            if self.key(needed).is_none() {
                return Err(CoreError::invalid("layout", format!("missing {needed:?} key")));
            }
        }
        Ok(())
    }

    pub fn key(&self, label: &str) -> Option<&Key> {
        self.keys.iter().find(|k| k.label == label)
    }

    /// Key that types `c`; a space maps to the space bar.
    pub fn key_for_char(&self, c: char) -> Option<&Key> {
        self.keys.iter().find(|k| k.char() == Some(c))
    }

    pub fn key_at(&self, x: f64, y: f64) -> Option<&Key> {
        self.keys.iter().filter(|k| k.contains(x, y)).min_by(|a, b| {
            a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
        })
    }
}

/// Label of the key containing the point; shared edges go to the key with smaller x, then smaller y.
pub fn key_at(x: f64, y: f64, layout: &KeyboardLayout) -> Option<&str> {
    layout.key_at(x, y).map(|k| k.label.as_str())
}
