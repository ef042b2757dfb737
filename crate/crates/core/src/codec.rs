//! Fixed-point packing of RSU telemetry into ℓ-slot vectors.
//!
//! Each record occupies four consecutive slots in the order
//! `(speed, acceleration, occupancy, queue_length)`. A vector holds
//! `⌊ℓ/4⌋` records; unused trailing slots are zero.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scalar::Real;

/// Slots consumed by one telemetry record.
pub const FIELDS_PER_RECORD: usize = 4;

/// Signed fixed-point format with `total_bits` bits, `fraction_bits` of them fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    total_bits: u32,
    fraction_bits: u32,
}

impl FixedPointFormat {
    /// B = 16, f = 8.
    pub const Q8_8: FixedPointFormat = FixedPointFormat { total_bits: 16, fraction_bits: 8 };

    pub fn new(total_bits: u32, fraction_bits: u32) -> Result<Self> {
        if fraction_bits >= total_bits || total_bits > 32 {
            return Err(Error::InvalidFormat { total_bits, fraction_bits });
        }
        Ok(FixedPointFormat { total_bits, fraction_bits })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn fraction_bits(&self) -> u32 {
        self.fraction_bits
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    /// Resolution `2^-f`.
    pub fn step<T: Real>(&self) -> T {
        T::of(2f64.powi(-(self.fraction_bits as i32)))
    }

    /// `2^(B-1-f)`: magnitude of the most negative representable value.
    pub fn max_magnitude<T: Real>(&self) -> T {
        T::of(2f64.powi(self.total_bits as i32 - 1 - self.fraction_bits as i32))
    }

    pub fn min_value<T: Real>(&self) -> T {
        -self.max_magnitude::<T>()
    }

    pub fn max_value<T: Real>(&self) -> T {
        self.max_magnitude::<T>() - self.step::<T>()
    }

    /// Worst-case quantization error `2^(-f-1)`.
    pub fn max_error<T: Real>(&self) -> T {
        self.step::<T>() * T::of(0.5)
    }

    /// `⌊x·2^f⌉` with ties rounded down.
    pub fn quantize<T: Real>(&self, x: T) -> Result<i64> {
        let (min, max) = (self.min_value::<T>(), self.max_value::<T>());
        if !(x >= min && x <= max) {
            return Err(Error::OutOfRange {
                value: x.to_f64().unwrap_or(f64::NAN),
                min: min.to_f64().unwrap_or(f64::NAN),
                max: max.to_f64().unwrap_or(f64::NAN),
            });
        }
        let scaled = x * T::of(2f64.powi(self.fraction_bits as i32));
        let code = scaled.round_half_down().to_i64().expect("bounded code");
        Ok(code.clamp(self.min_code(), self.max_code()))
    }

    pub fn dequantize<T: Real>(&self, code: i64) -> T {
        T::from_i64(code).expect("i64 converts to float") * self.step::<T>()
    }

    /// Snap `x` onto the representable grid.
    pub fn snap<T: Real>(&self, x: T) -> Result<T> {
        Ok(self.dequantize(self.quantize(x)?))
    }
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self::Q8_8
    }
}

/// Per-field formats, in slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFormat {
    pub speed: FixedPointFormat,
    pub acceleration: FixedPointFormat,
    pub occupancy: FixedPointFormat,
    pub queue_length: FixedPointFormat,
}

impl RecordFormat {
    pub fn uniform(fmt: FixedPointFormat) -> Self {
        RecordFormat { speed: fmt, acceleration: fmt, occupancy: fmt, queue_length: fmt }
    }

    pub fn fields(&self) -> [FixedPointFormat; FIELDS_PER_RECORD] {
        [self.speed, self.acceleration, self.occupancy, self.queue_length]
    }

    /// Largest worst-case quantization error over the fields.
    pub fn max_error<T: Real>(&self) -> T {
        self.fields().iter().map(|f| f.max_error::<T>()).fold(T::zero(), T::max)
    }

    /// Default 1-norm bound for an ℓ-slot vector: `ℓ · max_field 2^(B-1-f)`.
    pub fn loose_bound<T: Real>(&self, ell: usize) -> T {
        let widest = self.fields().iter().map(|f| f.max_magnitude::<T>()).fold(T::zero(), T::max);
        T::from_usize(ell).expect("usize converts to float") * widest
    }
}

impl Default for RecordFormat {
    fn default() -> Self {
        Self::uniform(FixedPointFormat::Q8_8)
    }
}

/// ℓ bounded reals, the plaintext unit of one symmetric ciphertext.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotVector<T> {
    values: Vec<T>,
    bound_b: T,
}

impl<T: Real> SlotVector<T> {
    pub fn new(values: Vec<T>, bound_b: T) -> Result<Self> {
        if !(bound_b.is_finite() && bound_b > T::zero()) {
            return Err(Error::NonpositiveBound(bound_b.to_f64().unwrap_or(f64::NAN)));
        }
        let sv = SlotVector { values, bound_b };
        let norm = sv.l1_norm();
        if !(norm <= bound_b) {
            return Err(Error::BoundViolation {
                norm: norm.to_f64().unwrap_or(f64::NAN),
                bound: bound_b.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(sv)
    }

    pub fn zeros(ell: usize, bound_b: T) -> Result<Self> {
        Self::new(vec![T::zero(); ell], bound_b)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn bound(&self) -> T {
        self.bound_b
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_norm(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// The four slot-mapped fields of a record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryFields<T> {
    /// m/s
    pub speed: T,
    /// m/s²
    pub acceleration: T,
    /// vehicles
    pub occupancy: T,
    /// vehicles
    pub queue_length: T,
}

impl<T: Real> TelemetryFields<T> {
    pub fn to_array(&self) -> [T; FIELDS_PER_RECORD] {
        [self.speed, self.acceleration, self.occupancy, self.queue_length]
    }

    pub fn from_slots(slots: &[T]) -> Self {
        TelemetryFields { speed: slots[0], acceleration: slots[1], occupancy: slots[2], queue_length: slots[3] }
    }

    /// Round every field onto its format's grid.
    pub fn quantized(&self, fmt: &RecordFormat) -> Result<Self> {
        let mut out = [T::zero(); FIELDS_PER_RECORD];
        for ((o, x), f) in out.iter_mut().zip(self.to_array()).zip(fmt.fields()) {
            *o = f.snap(x)?;
        }
        Ok(Self::from_slots(&out))
    }
}

/// One aggregated BSM record as seen by an RSU.
///
/// CSV column order: `rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord<T> {
    pub rsu_id: u32,
    pub timestamp_ms: u64,
    pub speed: T,
    pub acceleration: T,
    pub occupancy: T,
    pub queue_length: T,
}

impl<T: Real> TelemetryRecord<T> {
    pub fn fields(&self) -> TelemetryFields<T> {
        TelemetryFields {
            speed: self.speed,
            acceleration: self.acceleration,
            occupancy: self.occupancy,
            queue_length: self.queue_length,
        }
    }
}

pub fn records_per_vector(ell: usize) -> usize {
    ell / FIELDS_PER_RECORD
}

/// Pack records into ℓ-slot vectors in arrival order.
///
/// `bound_b` defaults to [`RecordFormat::loose_bound`].
pub fn pack_records<T: Real>(
    records: &[TelemetryRecord<T>],
    p: &ParamSet,
    fmt: &RecordFormat,
    bound_b: Option<T>,
) -> Result<Vec<SlotVector<T>>> {
    let per_vector = records_per_vector(p.ell);
    if per_vector == 0 {
        return Err(Error::Config(format!(
            "{} has {} slots, fewer than one record's {FIELDS_PER_RECORD}",
            p.name, p.ell
        )));
    }
    let bound = bound_b.unwrap_or_else(|| fmt.loose_bound(p.ell));
    records
        .chunks(per_vector)
        .map(|chunk| {
            let mut slots = vec![T::zero(); p.ell];
            for (rec, dst) in chunk.iter().zip(slots.chunks_mut(FIELDS_PER_RECORD)) {
                let q = rec.fields().quantized(fmt)?;
                dst.copy_from_slice(&q.to_array());
            }
            SlotVector::new(slots, bound)
        })
        .collect()
}

/// Slot layout of [`pack_records`] without quantization.
pub fn slot_layout<T: Real>(records: &[TelemetryRecord<T>], ell: usize) -> Vec<Vec<T>> {
    let per_vector = records_per_vector(ell).max(1);
    records
        .chunks(per_vector)
        .map(|chunk| {
            let mut slots = vec![T::zero(); ell];
            for (rec, dst) in chunk.iter().zip(slots.chunks_mut(FIELDS_PER_RECORD)) {
                dst.copy_from_slice(&rec.fields().to_array()[..dst.len()]);
            }
            slots
        })
        .collect()
}

/// Inverse of [`pack_records`] for the first `count` records.
pub fn unpack_records<T: Real>(vectors: &[SlotVector<T>], count: usize) -> Result<Vec<TelemetryFields<T>>> {
    let per_vector = vectors.first().map_or(0, |v| records_per_vector(v.len()));
    let capacity = per_vector * vectors.len();
    let mismatch = || Error::CountMismatch { count, vectors: vectors.len(), per_vector };
    if count > capacity || (!vectors.is_empty() && count <= capacity - per_vector) {
        return Err(mismatch());
    }
    if vectors.iter().any(|v| records_per_vector(v.len()) != per_vector) {
        return Err(mismatch());
    }
    Ok(vectors
        .iter()
        .flat_map(|v| v.values()[..per_vector * FIELDS_PER_RECORD].chunks(FIELDS_PER_RECORD))
        .take(count)
        .map(TelemetryFields::from_slots)
        .collect())
}

pub fn read_telemetry_csv<R: Read>(reader: R) -> Result<Vec<TelemetryRecord<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("telemetry csv: {e}"))))
        .collect()
}

pub fn load_telemetry_csv(path: &Path) -> Result<Vec<TelemetryRecord<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_telemetry_csv(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamSet, ParamSetName};

    fn rec(i: u32, speed: f64) -> TelemetryRecord<f64> {
        TelemetryRecord {
            rsu_id: 1,
            timestamp_ms: 100 * i as u64,
            speed,
            acceleration: -0.75,
            occupancy: 12.0,
            queue_length: 3.0 + i as f64,
        }
    }

    #[test]
    fn quantize_examples() {
        let q = FixedPointFormat::Q8_8;
        assert_eq!(q.quantize(60.5f64).unwrap(), 15488);
        assert_eq!(q.quantize(0.0f64).unwrap(), 0);
        assert_eq!(q.quantize(127.99609375f64).unwrap(), 32767);
        assert_eq!(q.quantize(-128.0f64).unwrap(), -32768);
        assert!(matches!(q.quantize(127.99609375f64 + 1e-9), Err(Error::OutOfRange { .. })));
        assert!(matches!(q.quantize(-128.0001f64), Err(Error::OutOfRange { .. })));
        assert!(q.quantize(f64::NAN).is_err());
        // Ties go down: 0.5/256 sits halfway between codes 0 and 1.
        assert_eq!(q.quantize(0.5f64 / 256.0).unwrap(), 0);
        assert_eq!(q.quantize(-0.5f64 / 256.0).unwrap(), -1);
    }

    #[test]
    fn dequantize_examples() {
        let q = FixedPointFormat::Q8_8;
        assert_eq!(q.dequantize::<f64>(15488), 60.5);
        assert_eq!(q.dequantize::<f64>(1), 1.0 / 256.0);
        assert_eq!(q.dequantize::<f32>(-256), -1.0);
    }

    #[test]
    fn format_validation() {
        assert!(FixedPointFormat::new(16, 16).is_err());
        assert!(FixedPointFormat::new(33, 8).is_err());
        let f = FixedPointFormat::new(32, 0).unwrap();
        assert_eq!(f.max_value::<f64>(), 2147483647.0);
    }

    #[test]
    fn pack_exact_fit_and_padding() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let fmt = RecordFormat::default();
        let three: Vec<_> = (0..3).map(|i| rec(i, 20.0 + i as f64)).collect();
        let packed = pack_records(&three, &p, &fmt, None).unwrap();
        assert_eq!(packed.len(), 1);
        assert!(packed[0].values().iter().skip(8).any(|v| *v != 0.0));

        let packed = pack_records(&three[..1], &p, &fmt, None).unwrap();
        assert_eq!(packed.len(), 1);
        assert_eq!(packed[0].values()[4..], [0.0; 8]);
        assert_eq!(packed[0].bound(), 12.0 * 128.0);
    }

    #[test]
    fn pack_twenty_into_sixty_slots() {
        let p = ParamSet::builtin(ParamSetName::Par80L);
        let recs: Vec<_> = (0..20).map(|i| rec(i, 10.0 + i as f64)).collect();
        let packed = pack_records(&recs, &p, &RecordFormat::default(), None).unwrap();
        assert_eq!(packed.len(), 2);
        // Second vector: records 15..20 in slots 0..20, zeros after.
        assert_eq!(packed[1].values()[0], 25.0);
        assert!(packed[1].values()[20..].iter().all(|v| *v == 0.0));
        let back = unpack_records(&packed, 20).unwrap();
        assert_eq!(back.len(), 20);
        assert_eq!(back[19].speed, 29.0);
    }

    #[test]
    fn unpack_edge_cases() {
        assert!(unpack_records::<f64>(&[], 0).unwrap().is_empty());
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let packed = pack_records(&[rec(0, 1.0)], &p, &RecordFormat::default(), None).unwrap();
        assert!(matches!(unpack_records(&packed, 4), Err(Error::CountMismatch { .. })));
        assert!(matches!(unpack_records(&packed, 0), Err(Error::CountMismatch { .. })));
        assert_eq!(unpack_records(&packed, 3).unwrap().len(), 3);
    }

    #[test]
    fn pack_rejects_out_of_range() {
        let p = ParamSet::builtin(ParamSetName::Par80S);
        let err = pack_records(&[rec(0, 300.0)], &p, &RecordFormat::default(), None).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn slot_vector_enforces_bound() {
        assert!(SlotVector::new(vec![1.0, -2.0], 3.0).is_ok());
        assert!(matches!(SlotVector::new(vec![1.0, -2.5], 3.0), Err(Error::BoundViolation { .. })));
        assert!(SlotVector::new(vec![0.0f32], 0.0).is_err());
    }

    #[test]
    fn csv_ingest() {
        let text = "rsu_id,timestamp_ms,speed,acceleration,occupancy,queue_length\n\
                    3, 100, 13.5, -0.25, 7, 2\n\
                    3, 200, 14.0, 0.5, 8, 3\n";
        let recs = read_telemetry_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].speed, 14.0);
        assert_eq!(recs[0].rsu_id, 3);
        assert!(read_telemetry_csv("rsu_id,timestamp_ms\n1,x\n".as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn quantization_error_bounded(x in -128.0f64..127.99609375) {
            let q = FixedPointFormat::Q8_8;
            let back: f64 = q.dequantize(q.quantize(x).unwrap());
            proptest::prop_assert!((back - x).abs() <= 1.0 / 512.0);
        }

        #[test]
        fn pack_unpack_identity(
            speeds in proptest::collection::vec(-128.0f64..127.0, 0..40),
            which in 0usize..6,
        ) {
            let p = ParamSet::builtin(ParamSetName::ALL[which]);
            let fmt = RecordFormat::default();
            let recs: Vec<_> = speeds.iter().enumerate().map(|(i, s)| rec(i as u32, *s)).collect();
            let packed = pack_records(&recs, &p, &fmt, None).unwrap();
            for sv in &packed {
                proptest::prop_assert!(sv.l1_norm() <= sv.bound());
                proptest::prop_assert_eq!(sv.len(), p.ell);
            }
            let back = unpack_records(&packed, recs.len()).unwrap();
            for (r, b) in recs.iter().zip(&back) {
                proptest::prop_assert_eq!(r.fields().quantized(&fmt).unwrap(), *b);
            }
        }
    }
}
