//! CSV formats for genomes, pedigrees and phylogenies.
//!
//! Dialect: comma-separated, mandatory header row, UTF-8, LF line endings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::island::{Genome, PedigreeRecord};
use crate::mesh::SampledGenome;
use crate::phylogeny::{PhyloRow, PhylogenyTable};
use crate::surface::{SurfaceAnnotation, SurfaceConfig};

pub fn encode_hex(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn decode_hex(hex: &str) -> Result<Vec<u8>> {
    if !hex.len().is_multiple_of(2) {
        return Err(Error::Data(format!("odd-length hex string of {} chars", hex.len())));
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| {
            hex.get(i..i + 2)
                .and_then(|pair| u8::from_str_radix(pair, 16).ok())
                .ok_or_else(|| Error::Data(format!("invalid hex at offset {i}")))
        })
        .collect()
}

fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn reader<R: Read>(source: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Data(format!(
            "expected CSV header {:?}, found {:?}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr)
}

pub const GENOME_HEADER: [&str; 7] = ["pe_x", "pe_y", "slot", "fitness", "depth", "annotation_hex", "lineage_id"];

#[derive(Debug, Serialize, Deserialize)]
struct GenomeRow {
    pe_x: u32,
    pe_y: u32,
    slot: usize,
    fitness: f64,
    depth: u64,
    annotation_hex: String,
    lineage_id: u64,
}

pub fn write_genomes<W: Write>(sink: W, genomes: &[SampledGenome]) -> Result<()> {
    let mut wtr = writer(sink);
    wtr.write_record(GENOME_HEADER)?;
    for s in genomes {
        wtr.serialize(GenomeRow {
            pe_x: s.coordinate.0,
            pe_y: s.coordinate.1,
            slot: s.slot,
            fitness: s.genome.fitness,
            depth: s.genome.depth(),
            annotation_hex: s.genome.annotation.to_hex()?,
            lineage_id: s.genome.lineage_id,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a genome export; annotations are decoded with `surface`.
pub fn read_genomes<R: Read>(source: R, surface: SurfaceConfig) -> Result<Vec<SampledGenome>> {
    let mut rdr = reader(source, &GENOME_HEADER)?;
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<GenomeRow>().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("genome row {}: {e}", line + 1)))?;
        let annotation = SurfaceAnnotation::from_hex(surface, &row.annotation_hex)?;
        if annotation.depth() != row.depth {
            return Err(Error::Data(format!(
                "genome row {}: depth column {} disagrees with annotation depth {}",
                line + 1,
                row.depth,
                annotation.depth()
            )));
        }
        if !row.fitness.is_finite() {
            return Err(Error::Data(format!("genome row {}: non-finite fitness", line + 1)));
        }
        out.push(SampledGenome {
            coordinate: (row.pe_x, row.pe_y),
            slot: row.slot,
            genome: Genome { fitness: row.fitness, annotation, lineage_id: row.lineage_id },
        });
    }
    Ok(out)
}

pub const PEDIGREE_HEADER: [&str; 5] = ["child_id", "parent_id", "birth_generation", "pe_x", "pe_y"];

pub fn write_pedigree<W: Write>(sink: W, records: &[PedigreeRecord]) -> Result<()> {
    let mut wtr = writer(sink);
    wtr.write_record(PEDIGREE_HEADER)?;
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_pedigree<R: Read>(source: R) -> Result<Vec<PedigreeRecord>> {
    let mut rdr = reader(source, &PEDIGREE_HEADER)?;
    rdr.deserialize()
        .enumerate()
        .map(|(line, r)| r.map_err(|e| Error::Data(format!("pedigree row {}: {e}", line + 1))))
        .collect()
}

pub const PHYLOGENY_HEADER: [&str; 4] = ["id", "ancestor_list", "origin_time", "taxon_label"];

fn format_ancestor_list(ancestor: Option<u64>) -> String {
    match ancestor {
        Some(id) => format!("[{id}]"),
        None => "[none]".to_string(),
    }
}

fn parse_ancestor_list(field: &str) -> Result<Option<u64>> {
    let inner = field
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Data(format!("ancestor_list {field:?} is not bracketed")))?
        .trim();
    if inner.eq_ignore_ascii_case("none") || inner.is_empty() {
        return Ok(None);
    }
    inner
        .parse()
        .map(Some)
        .map_err(|_| Error::Data(format!("ancestor_list {field:?} must hold a single id")))
}

pub fn write_phylogeny<W: Write>(sink: W, table: &PhylogenyTable) -> Result<()> {
    let mut wtr = writer(sink);
    wtr.write_record(PHYLOGENY_HEADER)?;
    for row in &table.rows {
        wtr.write_record([
            row.id.to_string(),
            format_ancestor_list(row.ancestor_id),
            row.origin_time.to_string(),
            row.taxon_label.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_phylogeny<R: Read>(source: R) -> Result<PhylogenyTable> {
    let mut rdr = reader(source, &PHYLOGENY_HEADER)?;
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).ok_or_else(|| Error::Data(format!("phylogeny row {}: missing field", line + 1)));
        let id = field(0)?
            .parse()
            .map_err(|_| Error::Data(format!("phylogeny row {}: bad id", line + 1)))?;
        let origin_time = field(2)?
            .parse()
            .map_err(|_| Error::Data(format!("phylogeny row {}: bad origin_time", line + 1)))?;
        let label = field(3)?;
        rows.push(PhyloRow {
            id,
            ancestor_id: parse_ancestor_list(field(1)?)?,
            origin_time,
            taxon_label: (!label.is_empty()).then(|| label.to_string()),
        });
    }
    if rows.is_empty() {
        return Err(Error::Data("phylogeny table has no rows".into()));
    }
    Ok(PhylogenyTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::SurfacePolicy;
    use proptest::prelude::*;

    #[test]
    fn hex_round_trip() {
        assert_eq!(encode_hex(&[0, 0xab, 0x10]), "00ab10");
        assert_eq!(decode_hex("00AB10").unwrap(), vec![0, 0xab, 0x10]);
        assert!(decode_hex("abc").is_err());
        assert!(decode_hex("zz").is_err());
    }

    #[test]
    fn ancestor_list_format() {
        assert_eq!(format_ancestor_list(None), "[none]");
        assert_eq!(format_ancestor_list(Some(12)), "[12]");
        assert_eq!(parse_ancestor_list("[none]").unwrap(), None);
        assert_eq!(parse_ancestor_list("[]").unwrap(), None);
        assert_eq!(parse_ancestor_list("[7]").unwrap(), Some(7));
        assert!(parse_ancestor_list("7").is_err());
        assert!(parse_ancestor_list("[1, 2]").is_err());
    }

    #[test]
    fn phylogeny_csv_text() {
        let table = PhylogenyTable {
            rows: vec![
                PhyloRow { id: 0, ancestor_id: None, origin_time: 0, taxon_label: None },
                PhyloRow { id: 1, ancestor_id: Some(0), origin_time: 2, taxon_label: Some("a,b".into()) },
            ],
        };
        let mut buf = Vec::new();
        write_phylogeny(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "id,ancestor_list,origin_time,taxon_label\n0,[none],0,\n1,[0],2,\"a,b\"\n");
        assert_eq!(read_phylogeny(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn bad_inputs_are_data_errors() {
        assert!(matches!(read_phylogeny("id,ancestor_list,origin_time,taxon_label\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(read_phylogeny("".as_bytes()), Err(Error::Data(_))));
        assert!(read_phylogeny("id,parent\n0,1\n".as_bytes()).is_err());
        assert!(read_pedigree("child_id,parent_id,birth_generation,pe_x,pe_y\nx,1,1,0,0\n".as_bytes()).is_err());
    }

    fn arb_genomes() -> impl Strategy<Value = (SurfaceConfig, Vec<SampledGenome>)> {
        let policy = prop_oneof![Just(SurfacePolicy::Steady), Just(SurfacePolicy::Ring)];
        let width = prop::sample::select(vec![1u8, 8, 16, 32, 64]);
        (policy, 1u32..=5, width).prop_flat_map(|(policy, log_sites, width)| {
            let config = SurfaceConfig::new(policy, 1 << log_sites, width).unwrap();
            let genome = (
                0u32..5,
                0u32..5,
                0usize..40,
                any::<f64>().prop_filter("finite", |f| f.is_finite()),
                prop::collection::vec(any::<u64>(), 0..70),
                any::<u64>(),
            )
                .prop_map(move |(x, y, slot, fitness, deposits, lineage_id)| {
                    let mut annotation = SurfaceAnnotation::new(config).unwrap();
                    for d in deposits {
                        annotation.deposit_masked(d);
                    }
                    SampledGenome { coordinate: (x, y), slot, genome: Genome { fitness, annotation, lineage_id } }
                });
            (Just(config), prop::collection::vec(genome, 0..8))
        })
    }

    proptest! {
        #[test]
        fn genomes_round_trip((config, genomes) in arb_genomes()) {
            let mut buf = Vec::new();
            write_genomes(&mut buf, &genomes).unwrap();
            prop_assert_eq!(read_genomes(buf.as_slice(), config).unwrap(), genomes);
        }

        #[test]
        fn pedigree_round_trip(raw in prop::collection::vec((any::<u64>(), any::<u64>(), any::<u64>(), any::<u32>(), any::<u32>()), 0..20)) {
            let records: Vec<PedigreeRecord> = raw.into_iter()
                .map(|(child_id, parent_id, birth_generation, pe_x, pe_y)| PedigreeRecord { child_id, parent_id, birth_generation, pe_x, pe_y })
                .collect();
            let mut buf = Vec::new();
            write_pedigree(&mut buf, &records).unwrap();
            prop_assert_eq!(read_pedigree(buf.as_slice()).unwrap(), records);
        }
    }
}
