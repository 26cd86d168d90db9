//! Person and couple types, and fixed-size associations keyed by them.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SkillType {
    H,
    L,
}

impl SkillType {
    pub const ALL: [SkillType; 2] = [SkillType::H, SkillType::L];

    pub fn index(self) -> usize {
        match self {
            SkillType::H => 0,
            SkillType::L => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SkillType::H => "H",
            SkillType::L => "L",
        }
    }

    pub fn other(self) -> SkillType {
        match self {
            SkillType::H => SkillType::L,
            SkillType::L => SkillType::H,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::M, Gender::F];

    pub fn index(self) -> usize {
        match self {
            Gender::M => 0,
            Gender::F => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Gender::M => "M",
            Gender::F => "F",
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::M => Gender::F,
            Gender::F => Gender::M,
        }
    }

    /// Sign with which the wife-oriented transfer enters this gender's utility.
    pub fn transfer_sign(self) -> f64 {
        match self {
            Gender::M => -1.0,
            Gender::F => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PersonType {
    pub gender: Gender,
    pub skill: SkillType,
}

impl PersonType {
    pub const MH: PersonType = PersonType::new(Gender::M, SkillType::H);
    pub const ML: PersonType = PersonType::new(Gender::M, SkillType::L);
    pub const FH: PersonType = PersonType::new(Gender::F, SkillType::H);
    pub const FL: PersonType = PersonType::new(Gender::F, SkillType::L);
    pub const ALL: [PersonType; 4] = [Self::MH, Self::ML, Self::FH, Self::FL];

    pub const fn new(gender: Gender, skill: SkillType) -> Self {
        PersonType { gender, skill }
    }

    pub fn index(self) -> usize {
        self.gender.index() * 2 + self.skill.index()
    }

    pub fn label(self) -> &'static str {
        match (self.gender, self.skill) {
            (Gender::M, SkillType::H) => "MH",
            (Gender::M, SkillType::L) => "ML",
            (Gender::F, SkillType::H) => "FH",
            (Gender::F, SkillType::L) => "FL",
        }
    }

    pub fn parse(label: &str) -> Option<PersonType> {
        Self::ALL.into_iter().find(|p| p.label() == label)
    }

    /// The opposite-gender type with the given skill.
    pub fn spouse(self, spouse_skill: SkillType) -> PersonType {
        PersonType::new(self.gender.other(), spouse_skill)
    }

    pub fn couple_with(self, spouse_skill: SkillType) -> CoupleType {
        match self.gender {
            Gender::M => CoupleType::new(self.skill, spouse_skill),
            Gender::F => CoupleType::new(spouse_skill, self.skill),
        }
    }
}

impl fmt::Display for PersonType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Couple identified by (husband skill, wife skill).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoupleType {
    pub husband: SkillType,
    pub wife: SkillType,
}

impl CoupleType {
    pub const HH: CoupleType = CoupleType::new(SkillType::H, SkillType::H);
    pub const HL: CoupleType = CoupleType::new(SkillType::H, SkillType::L);
    pub const LH: CoupleType = CoupleType::new(SkillType::L, SkillType::H);
    pub const LL: CoupleType = CoupleType::new(SkillType::L, SkillType::L);
    pub const ALL: [CoupleType; 4] = [Self::HH, Self::HL, Self::LH, Self::LL];

    pub const fn new(husband: SkillType, wife: SkillType) -> Self {
        CoupleType { husband, wife }
    }

    pub fn index(self) -> usize {
        self.husband.index() * 2 + self.wife.index()
    }

    pub fn label(self) -> &'static str {
        ["HH", "HL", "LH", "LL"][self.index()]
    }

    pub fn husband_type(self) -> PersonType {
        PersonType::new(Gender::M, self.husband)
    }

    pub fn wife_type(self) -> PersonType {
        PersonType::new(Gender::F, self.wife)
    }

    pub fn member(self, gender: Gender) -> PersonType {
        match gender {
            Gender::M => self.husband_type(),
            Gender::F => self.wife_type(),
        }
    }

    pub fn same_education(self) -> bool {
        self.husband == self.wife
    }
}

impl fmt::Display for CoupleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

macro_rules! association {
    ($(#[$meta:meta])* $name:ident, $key:ty, [$($field:ident => $label:literal => $konst:expr),+]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        pub struct $name<T> {
            $(#[serde(rename = $label)] pub $field: T,)+
        }

        impl<T> $name<T> {
            pub fn from_fn(mut f: impl FnMut($key) -> T) -> Self {
                $name { $($field: f($konst),)+ }
            }

            pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> $name<U> {
                $name { $($field: f(&self.$field),)+ }
            }

            pub fn iter(&self) -> impl Iterator<Item = ($key, &T)> {
                [$(($konst, &self.$field)),+].into_iter()
            }

            pub fn values(&self) -> impl Iterator<Item = &T> {
                [$(&self.$field),+].into_iter()
            }
        }

        impl<T: Clone> $name<T> {
            pub fn splat(value: T) -> Self {
                $name { $($field: value.clone(),)+ }
            }
        }

        impl<T> Index<$key> for $name<T> {
            type Output = T;
            fn index(&self, key: $key) -> &T {
                $(if key == $konst { return &self.$field; })+
                unreachable!()
            }
        }

        impl<T> IndexMut<$key> for $name<T> {
            fn index_mut(&mut self, key: $key) -> &mut T {
                $(if key == $konst { return &mut self.$field; })+
                unreachable!()
            }
        }
    };
}

association!(
    /// One value per skill level.
    PerSkill, SkillType, [h => "H" => SkillType::H, l => "L" => SkillType::L]
);

association!(
    /// One value per person type, in canonical order MH, ML, FH, FL.
    PerPerson, PersonType, [
        mh => "MH" => PersonType::MH,
        ml => "ML" => PersonType::ML,
        fh => "FH" => PersonType::FH,
        fl => "FL" => PersonType::FL
    ]
);

association!(
    /// One value per couple type, in canonical order HH, HL, LH, LL.
    PerCouple, CoupleType, [
        hh => "HH" => CoupleType::HH,
        hl => "HL" => CoupleType::HL,
        lh => "LH" => CoupleType::LH,
        ll => "LL" => CoupleType::LL
    ]
);

impl PerPerson<f64> {
    pub fn total(&self) -> f64 {
        self.values().sum()
    }

    pub fn gender_total(&self, gender: Gender) -> f64 {
        SkillType::ALL
            .iter()
            .map(|&s| self[PersonType::new(gender, s)])
            .sum()
    }
}

impl PerCouple<f64> {
    pub fn total(&self) -> f64 {
        self.values().sum()
    }

    /// Couples that include a member of type `p`.
    pub fn involving(&self, p: PersonType) -> f64 {
        SkillType::ALL
            .iter()
            .map(|&s| self[p.couple_with(s)])
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_orders() {
        let labels: Vec<_> = PersonType::ALL.iter().map(|p| p.label()).collect();
        assert_eq!(labels, ["MH", "ML", "FH", "FL"]);
        for (i, p) in PersonType::ALL.iter().enumerate() {
            assert_eq!(p.index(), i);
        }
        for (i, c) in CoupleType::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
        }
    }

    #[test]
    fn couple_membership_round_trips() {
        for c in CoupleType::ALL {
            assert_eq!(c.husband_type().couple_with(c.wife), c);
            assert_eq!(c.wife_type().couple_with(c.husband), c);
        }
    }

    #[test]
    fn association_indexing_matches_fields() {
        let v = PerPerson::from_fn(|p| p.index() as f64);
        assert_eq!(v.fl, 3.0);
        assert_eq!(v[PersonType::ML], 1.0);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"MH":0.0,"ML":1.0,"FH":2.0,"FL":3.0}"#);
    }

    #[test]
    fn couples_involving_type() {
        let c = PerCouple::from_fn(|c| (c.index() + 1) as f64);
        assert_eq!(c.involving(PersonType::MH), 3.0);
        assert_eq!(c.involving(PersonType::FL), 6.0);
    }
}
