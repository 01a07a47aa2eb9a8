//! Trace ingestion: parse raw snapshot files, merge them into one stream
//! sorted by `(timestamp, char_id)`, and drop exact duplicate
//! `(char_id, timestamp)` observations (first record in input order wins).
//!
//! Parsing is streaming with bounded memory. Sorted runs above
//! `spill_threshold` rows are written to anonymous temp files and merged
//! back lazily, so a multi-gigabyte ingest never holds the full trace in
//! memory.

use std::collections::{BinaryHeap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schema::{Column, TraceSchema, Vocabulary};
use crate::timeutil::{TimeWindow, Timestamp};

/// One 10-minute observation of one character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub char_id: u64,
    pub level: u8,
    pub race: String,
    pub char_class: String,
    pub zone: String,
    /// Absent when the character was unguilded at that instant.
    pub guild_id: Option<u64>,
    pub timestamp: Timestamp,
}

/// How to treat rows that fail validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad row.
    Strict,
    /// Count bad rows and keep going; unknown race/class values pass
    /// through unvalidated. Default, so one bad row cannot kill a long
    /// ingest.
    #[default]
    Lenient,
}

/// Counters describing one ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_rejected: u64,
    pub duplicates_dropped: u64,
    pub accepted: u64,
    pub unique_characters: u64,
    pub unique_zones: u64,
    pub unique_guilds: u64,
    pub unique_timestamps: u64,
    pub window_start: Option<Timestamp>,
    pub window_end: Option<Timestamp>,
}

impl IngestStats {
    /// `name,value` pairs in a fixed order, ready for CSV export.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let fmt_ts = |t: &Option<Timestamp>| t.map(|v| v.format()).unwrap_or_default();
        vec![
            ("rows_read".into(), self.rows_read.to_string()),
            ("rows_rejected".into(), self.rows_rejected.to_string()),
            (
                "duplicates_dropped".into(),
                self.duplicates_dropped.to_string(),
            ),
            ("accepted".into(), self.accepted.to_string()),
            (
                "unique_characters".into(),
                self.unique_characters.to_string(),
            ),
            ("unique_zones".into(), self.unique_zones.to_string()),
            ("unique_guilds".into(), self.unique_guilds.to_string()),
            (
                "unique_timestamps".into(),
                self.unique_timestamps.to_string(),
            ),
            ("window_start".into(), fmt_ts(&self.window_start)),
            ("window_end".into(), fmt_ts(&self.window_end)),
        ]
    }
}

/// Options for [`ingest_traces`].
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub mode: ParseMode,
    /// Rows held in memory per sorted run before spilling to disk.
    pub spill_threshold: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            mode: ParseMode::Lenient,
            spill_threshold: 2_000_000,
        }
    }
}

/// Parse one delimited trace row into a record.
///
/// Timestamps are snapped down to the previous 10-minute boundary; an empty
/// guild column yields an absent `guild_id`. In lenient mode, race/class
/// values outside the vocabulary pass through; in strict mode they are
/// rejected.
pub fn parse_snapshot_line(
    line: &str,
    schema: &TraceSchema,
    vocab: &Vocabulary,
    mode: ParseMode,
) -> Result<SnapshotRecord> {
    let fields: Vec<&str> = line.split(schema.delimiter).collect();
    if fields.len() != 7 {
        return Err(Error::invalid(format!(
            "expected 7 columns, got {}",
            fields.len()
        )));
    }
    let field = |c: Column| fields[schema.position(c)].trim();

    let char_id: u64 = field(Column::CharId)
        .parse()
        .map_err(|_| Error::invalid(format!("bad char id {:?}", field(Column::CharId))))?;

    let level: i64 = field(Column::Level)
        .parse()
        .map_err(|_| Error::invalid(format!("bad level {:?}", field(Column::Level))))?;
    if !(1..=80).contains(&level) {
        return Err(Error::invalid(format!("level {level} out of range 1..=80")));
    }

    let race = field(Column::Race).to_string();
    let char_class = field(Column::Class).to_string();
    if mode == ParseMode::Strict {
        if !vocab.knows_race(&race) {
            return Err(Error::invalid(format!("unknown race {race:?}")));
        }
        if !vocab.knows_class(&char_class) {
            return Err(Error::invalid(format!("unknown class {char_class:?}")));
        }
    }

    let guild_field = field(Column::Guild);
    let guild_id = if guild_field.is_empty() {
        None
    } else {
        Some(
            guild_field
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad guild id {guild_field:?}")))?,
        )
    };

    let timestamp = Timestamp::parse(field(Column::Timestamp))?.snap_to_slot();

    Ok(SnapshotRecord {
        char_id,
        level: level as u8,
        race,
        char_class,
        zone: field(Column::Zone).to_string(),
        guild_id,
        timestamp,
    })
}

/// Format a record as one trace row in the schema's column order. Parsing
/// the result reproduces the record exactly.
pub fn format_snapshot_line(record: &SnapshotRecord, schema: &TraceSchema) -> String {
    let delim = schema.delimiter.to_string();
    let guild = record
        .guild_id
        .map(|g| g.to_string())
        .unwrap_or_default();
    let level = record.level.to_string();
    let char_id = record.char_id.to_string();
    let timestamp = record.timestamp.format();
    schema
        .columns
        .iter()
        .map(|c| match c {
            Column::CharId => char_id.as_str(),
            Column::Level => level.as_str(),
            Column::Race => record.race.as_str(),
            Column::Class => record.char_class.as_str(),
            Column::Zone => record.zone.as_str(),
            Column::Guild => guild.as_str(),
            Column::Timestamp => timestamp.as_str(),
        })
        .collect::<Vec<_>>()
        .join(&delim)
}

/// Keep only the records inside the closed window.
pub fn window_filter<I>(records: I, window: TimeWindow) -> impl Iterator<Item = SnapshotRecord>
where
    I: Iterator<Item = SnapshotRecord>,
{
    records.filter(move |r| window.contains(r.timestamp))
}

// Sort key: timestamp, then char id, then global input position. The input
// position makes first-record-wins deduplication exact: among records with
// equal (timestamp, char_id) the earliest input row has the smallest key.
type SortKey = (i64, u64, u64);

fn sort_key(record: &SnapshotRecord, seq: u64) -> SortKey {
    (record.timestamp.epoch_seconds(), record.char_id, seq)
}

enum Run {
    Memory(Vec<(SortKey, SnapshotRecord)>),
    Disk(BufReader<File>),
}

struct RunCursor {
    run: Run,
    /// Position within a memory run.
    pos: usize,
}

impl RunCursor {
    fn next(&mut self) -> Result<Option<(SortKey, SnapshotRecord)>> {
        match &mut self.run {
            Run::Memory(items) => {
                if self.pos < items.len() {
                    let item = std::mem::replace(
                        &mut items[self.pos],
                        ((0, 0, 0), placeholder_record()),
                    );
                    self.pos += 1;
                    Ok(Some(item))
                } else {
                    Ok(None)
                }
            }
            Run::Disk(reader) => read_spilled(reader),
        }
    }
}

fn placeholder_record() -> SnapshotRecord {
    SnapshotRecord {
        char_id: 0,
        level: 1,
        race: String::new(),
        char_class: String::new(),
        zone: String::new(),
        guild_id: None,
        timestamp: Timestamp::from_epoch_seconds(0),
    }
}

// Spill codec: little-endian fixed fields followed by length-prefixed
// strings. Only ever read back by this module.

fn write_spilled(w: &mut impl Write, key: &SortKey, r: &SnapshotRecord) -> std::io::Result<()> {
    w.write_all(&key.2.to_le_bytes())?;
    w.write_all(&r.timestamp.epoch_seconds().to_le_bytes())?;
    w.write_all(&r.char_id.to_le_bytes())?;
    w.write_all(&[r.level])?;
    let guild = r.guild_id.map(|g| g as i64).unwrap_or(-1);
    w.write_all(&guild.to_le_bytes())?;
    for s in [&r.race, &r.char_class, &r.zone] {
        let bytes = s.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    Ok(())
}

fn read_spilled(r: &mut impl Read) -> Result<Option<(SortKey, SnapshotRecord)>> {
    let mut seq_buf = [0u8; 8];
    match r.read_exact(&mut seq_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let seq = u64::from_le_bytes(seq_buf);
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let ts = i64::from_le_bytes(buf8);
    r.read_exact(&mut buf8)?;
    let char_id = u64::from_le_bytes(buf8);
    let mut level = [0u8; 1];
    r.read_exact(&mut level)?;
    r.read_exact(&mut buf8)?;
    let guild = i64::from_le_bytes(buf8);
    let mut strings = [String::new(), String::new(), String::new()];
    for s in strings.iter_mut() {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)?;
        let len = u32::from_le_bytes(len_buf) as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        *s = String::from_utf8(bytes)
            .map_err(|_| Error::invalid("corrupt spill file: non-utf8 string"))?;
    }
    let [race, char_class, zone] = strings;
    let record = SnapshotRecord {
        char_id,
        level: level[0],
        race,
        char_class,
        zone,
        guild_id: if guild < 0 { None } else { Some(guild as u64) },
        timestamp: Timestamp::from_epoch_seconds(ts),
    };
    Ok(Some((sort_key(&record, seq), record)))
}

fn spill_run(items: &mut Vec<(SortKey, SnapshotRecord)>) -> Result<Run> {
    items.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let file = tempfile::tempfile()?;
    let mut writer = BufWriter::new(file);
    for (key, record) in items.iter() {
        write_spilled(&mut writer, key, record)?;
    }
    let mut file = writer
        .into_inner()
        .map_err(|e| Error::Io(e.into_error()))?;
    use std::io::Seek;
    file.seek(std::io::SeekFrom::Start(0))?;
    items.clear();
    Ok(Run::Disk(BufReader::new(file)))
}

struct FileParseOutput {
    runs: Vec<Run>,
    rows_read: u64,
    rows_rejected: u64,
}

fn parse_file(
    path: &Path,
    file_index: usize,
    schema: &TraceSchema,
    vocab: &Vocabulary,
    opts: &IngestOptions,
) -> Result<FileParseOutput> {
    let file = File::open(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut line_no: u64 = 0;
    let mut rows_read: u64 = 0;
    let mut rows_rejected: u64 = 0;
    let mut chunk: Vec<(SortKey, SnapshotRecord)> = Vec::new();
    let mut runs: Vec<Run> = Vec::new();

    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if line_no == 1 && schema.has_header {
            continue;
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.trim().is_empty() {
            continue;
        }
        rows_read += 1;
        match parse_snapshot_line(trimmed, schema, vocab, opts.mode) {
            Ok(record) => {
                // Sequence numbers order by (file, line) so dedup is stable
                // no matter how files are scheduled across threads.
                let seq = ((file_index as u64) << 40) | line_no;
                chunk.push((sort_key(&record, seq), record));
                if chunk.len() >= opts.spill_threshold {
                    runs.push(spill_run(&mut chunk)?);
                }
            }
            Err(e) => match opts.mode {
                ParseMode::Strict => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: line_no,
                        message: e.to_string(),
                    });
                }
                ParseMode::Lenient => rows_rejected += 1,
            },
        }
    }
    if !chunk.is_empty() {
        chunk.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        runs.push(Run::Memory(chunk));
    }
    Ok(FileParseOutput {
        runs,
        rows_read,
        rows_rejected,
    })
}

/// Stream of merged, sorted, deduplicated records. Drive it with the
/// `Iterator` impl, then call [`TraceStream::finish`] for the stats.
pub struct TraceStream {
    cursors: Vec<RunCursor>,
    pending: Vec<Option<SnapshotRecord>>,
    heap: BinaryHeap<std::cmp::Reverse<(SortKey, usize)>>,
    last_emitted: Option<(i64, u64)>,
    stats: IngestStats,
    chars: HashSet<u64>,
    zones: HashSet<String>,
    guilds: HashSet<u64>,
    timestamps: HashSet<i64>,
    error: Option<Error>,
}

impl TraceStream {
    fn new(cursors: Vec<RunCursor>, stats: IngestStats) -> Result<Self> {
        let pending = (0..cursors.len()).map(|_| None).collect();
        let mut stream = TraceStream {
            cursors,
            pending,
            heap: BinaryHeap::new(),
            last_emitted: None,
            stats,
            chars: HashSet::new(),
            zones: HashSet::new(),
            guilds: HashSet::new(),
            timestamps: HashSet::new(),
            error: None,
        };
        for idx in 0..stream.cursors.len() {
            stream.push_from(idx)?;
        }
        Ok(stream)
    }

    fn push_from(&mut self, idx: usize) -> Result<()> {
        if let Some((key, record)) = self.cursors[idx].next()? {
            self.heap.push(std::cmp::Reverse((key, idx)));
            self.pending[idx] = Some(record);
        }
        Ok(())
    }

    fn observe(&mut self, record: &SnapshotRecord) {
        self.stats.accepted += 1;
        self.chars.insert(record.char_id);
        if !self.zones.contains(&record.zone) {
            self.zones.insert(record.zone.clone());
        }
        if let Some(g) = record.guild_id {
            self.guilds.insert(g);
        }
        self.timestamps.insert(record.timestamp.epoch_seconds());
        if self.stats.window_start.is_none() {
            self.stats.window_start = Some(record.timestamp);
        }
        self.stats.window_end = Some(record.timestamp);
    }

    /// Drain the stream and return the final stats. Any I/O error hit while
    /// reading spilled runs surfaces here.
    pub fn finish(mut self) -> Result<IngestStats> {
        for _ in &mut self {}
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.stats.unique_characters = self.chars.len() as u64;
        self.stats.unique_zones = self.zones.len() as u64;
        self.stats.unique_guilds = self.guilds.len() as u64;
        self.stats.unique_timestamps = self.timestamps.len() as u64;
        Ok(self.stats)
    }
}

impl Iterator for TraceStream {
    type Item = SnapshotRecord;

    fn next(&mut self) -> Option<SnapshotRecord> {
        if self.error.is_some() {
            return None;
        }
        loop {
            let std::cmp::Reverse((key, idx)) = self.heap.pop()?;
            let record = self.pending[idx].take().expect("pending record for run");
            if let Err(e) = self.push_from(idx) {
                self.error = Some(e);
                return None;
            }
            let id = (key.0, key.1);
            if self.last_emitted == Some(id) {
                self.stats.duplicates_dropped += 1;
                continue;
            }
            self.last_emitted = Some(id);
            self.observe(&record);
            return Some(record);
        }
    }
}

/// Parse, merge, sort, and deduplicate the given trace files.
///
/// Files parse in parallel (bounded by the ambient rayon pool); the merge
/// is an ordered k-way merge, so output is identical for any thread count.
/// An unreadable file is fatal; per-line failures follow `opts.mode`.
pub fn ingest_traces(
    paths: &[PathBuf],
    schema: &TraceSchema,
    vocab: &Vocabulary,
    opts: &IngestOptions,
) -> Result<TraceStream> {
    let outputs: Vec<Result<FileParseOutput>> = paths
        .par_iter()
        .enumerate()
        .map(|(idx, path)| parse_file(path, idx, schema, vocab, opts))
        .collect();

    let mut stats = IngestStats::default();
    let mut cursors = Vec::new();
    for output in outputs {
        let output = output?;
        stats.rows_read += output.rows_read;
        stats.rows_rejected += output.rows_rejected;
        for run in output.runs {
            cursors.push(RunCursor { run, pos: 0 });
        }
    }
    TraceStream::new(cursors, stats)
}

/// Write records as a canonical trace in the schema's format. Returns the
/// number of rows written.
pub fn write_trace<I>(records: I, schema: &TraceSchema, out: &mut impl Write) -> Result<u64>
where
    I: Iterator<Item = SnapshotRecord>,
{
    if schema.has_header {
        writeln!(out, "{}", schema.header_line())?;
    }
    let mut count = 0;
    for record in records {
        writeln!(out, "{}", format_snapshot_line(&record, schema))?;
        count += 1;
    }
    Ok(count)
}
