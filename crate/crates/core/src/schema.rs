//! Trace file schema: which column holds which field, plus the closed
//! race/class vocabularies used for validation.
//!
//! Public trace distributions disagree on column order and delimiter, so
//! both are configuration rather than constants.

use crate::error::{Error, Result};

/// The seven fields a snapshot row must provide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    CharId,
    Level,
    Race,
    Class,
    Zone,
    Guild,
    Timestamp,
}

impl Column {
    pub fn parse_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "char" | "char_id" | "character" => Ok(Column::CharId),
            "level" => Ok(Column::Level),
            "race" => Ok(Column::Race),
            "class" | "charclass" | "char_class" => Ok(Column::Class),
            "zone" => Ok(Column::Zone),
            "guild" | "guild_id" => Ok(Column::Guild),
            "timestamp" | "time" => Ok(Column::Timestamp),
            other => Err(Error::invalid(format!("unknown trace column {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::CharId => "char",
            Column::Level => "level",
            Column::Race => "race",
            Column::Class => "class",
            Column::Zone => "zone",
            Column::Guild => "guild",
            Column::Timestamp => "timestamp",
        }
    }
}

/// Column order, delimiter, and header flag for one trace format.
#[derive(Debug, Clone)]
pub struct TraceSchema {
    pub columns: [Column; 7],
    pub delimiter: char,
    pub has_header: bool,
}

impl TraceSchema {
    /// `char,level,race,class,zone,guild,timestamp` with comma delimiter.
    pub fn default_order() -> Self {
        TraceSchema {
            columns: [
                Column::CharId,
                Column::Level,
                Column::Race,
                Column::Class,
                Column::Zone,
                Column::Guild,
                Column::Timestamp,
            ],
            delimiter: ',',
            has_header: false,
        }
    }

    pub fn from_names(names: &[String], delimiter: char, has_header: bool) -> Result<Self> {
        if names.len() != 7 {
            return Err(Error::invalid(format!(
                "schema must name exactly 7 columns, got {}",
                names.len()
            )));
        }
        let mut columns = [Column::CharId; 7];
        for (i, name) in names.iter().enumerate() {
            columns[i] = Column::parse_name(name)?;
        }
        // Every field must appear exactly once.
        for probe in [
            Column::CharId,
            Column::Level,
            Column::Race,
            Column::Class,
            Column::Zone,
            Column::Guild,
            Column::Timestamp,
        ] {
            if columns.iter().filter(|c| **c == probe).count() != 1 {
                return Err(Error::invalid(format!(
                    "schema must mention column {:?} exactly once",
                    probe.name()
                )));
            }
        }
        Ok(TraceSchema {
            columns,
            delimiter,
            has_header,
        })
    }

    /// Index of `column` within a row.
    pub fn position(&self, column: Column) -> usize {
        self.columns
            .iter()
            .position(|c| *c == column)
            .expect("schema holds all columns")
    }

    pub fn header_line(&self) -> String {
        self.columns
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(&self.delimiter.to_string())
    }
}

/// Closed vocabularies for the enumerated race/class fields. Order matters:
/// one-hot encodings and reports follow the declared order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub races: Vec<String>,
    pub classes: Vec<String>,
}

impl Vocabulary {
    /// Built-in vocabulary used by the synthetic generator and as the
    /// config default: five races, ten classes.
    pub fn default_game() -> Self {
        Vocabulary {
            races: ["Orc", "Troll", "Tauren", "Undead", "BloodElf"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            classes: [
                "Warrior",
                "Hunter",
                "Mage",
                "Priest",
                "Rogue",
                "Shaman",
                "Warlock",
                "Druid",
                "Paladin",
                "DeathKnight",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    pub fn knows_race(&self, race: &str) -> bool {
        self.races.iter().any(|r| r == race)
    }

    pub fn knows_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_positions() {
        let schema = TraceSchema::default_order();
        assert_eq!(schema.position(Column::CharId), 0);
        assert_eq!(schema.position(Column::Timestamp), 6);
        assert_eq!(schema.header_line(), "char,level,race,class,zone,guild,timestamp");
    }

    #[test]
    fn schema_rejects_duplicates_and_gaps() {
        let names: Vec<String> = ["char", "level", "race", "class", "zone", "guild", "guild"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert!(TraceSchema::from_names(&names, ',', false).is_err());
        let short: Vec<String> = vec!["char".into()];
        assert!(TraceSchema::from_names(&short, ',', false).is_err());
    }

    #[test]
    fn custom_order_round_trips() {
        let names: Vec<String> = ["timestamp", "char", "guild", "zone", "class", "race", "level"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let schema = TraceSchema::from_names(&names, ';', true).unwrap();
        assert_eq!(schema.position(Column::Timestamp), 0);
        assert_eq!(schema.position(Column::Level), 6);
        assert_eq!(schema.delimiter, ';');
        assert!(schema.has_header);
    }
}
