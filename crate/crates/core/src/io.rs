//! Line-delimited text formats for every stream.
//!
//! Each file starts with a `# <kind> v1 ...` header; blank lines and further
//! `#` lines are ignored. Numbers are written in shortest round-trip form so
//! that reading a file back reproduces the values exactly.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DVector, Matrix3, Vector3};

use crate::calibration::{CalibrationResult, ImuLog, ImuSample, SENSOR_COUNT, SENSOR_NAMES};
use crate::contact::ContactStatus;
use crate::error::{Error, Result};
use crate::pipeline::FrameOutput;
use crate::skeleton::{CharacterState, SkeletonModel};
use crate::synth::MotionSequence;
use crate::translation::EstimatorFrame;

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Lines {
            path,
            iter: text.lines().enumerate(),
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Header fields after `# <kind> v1`, as key/value pairs.
    fn header(&mut self, kind: &str) -> Result<Vec<(String, String)>> {
        let Some((i, line)) = self.iter.next() else {
            return Err(self.err(1, format!("empty file, expected a {kind} header")));
        };
        let mut words = line.split_whitespace();
        if words.next() != Some("#") || words.next() != Some(kind) {
            return Err(self.err(i + 1, format!("expected header '# {kind} v1', found {line:?}")));
        }
        match words.next() {
            Some("v1") => {}
            v => return Err(self.err(i + 1, format!("unsupported {kind} version {v:?}"))),
        }
        let rest: Vec<&str> = words.collect();
        Ok(rest.chunks(2).map(|c| (c[0].to_string(), c.get(1).unwrap_or(&"").to_string())).collect())
    }

    /// Next data line as its 1-based number and whitespace-separated fields.
    fn next_record(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.iter.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((i + 1, line.split_whitespace().collect()));
        }
        None
    }

    fn num(&self, line: usize, field: &str) -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| self.err(line, format!("invalid number {field:?}")))
    }

    fn nums(&self, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
        fields.iter().map(|f| self.num(line, f)).collect()
    }
}

fn header_value<T: std::str::FromStr>(lines: &Lines, fields: &[(String, String)], key: &str) -> Result<T> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| lines.err(1, format!("header is missing '{key}'")))?
        .1
        .parse()
        .map_err(|_| lines.err(1, format!("bad header value for '{key}'")))
}

fn push_nums<'a>(s: &mut String, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        let _ = write!(s, " {x:?}");
    }
}

fn push_matrix(s: &mut String, m: &Matrix3<f64>) {
    // Row-major.
    for r in 0..3 {
        push_nums(s, m.row(r).iter());
    }
}

fn matrix_from(v: &[f64]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

/// `t vpar vperp(3) s(5) g_root(3 or "- - -") theta(3k)`
pub fn frames_to_text(frames: &[EstimatorFrame], joints: usize) -> String {
    let mut s = format!("# estimator-frames v1 joints {joints}\n");
    for f in frames {
        let _ = write!(s, "{:?} {:?}", f.timestamp, f.v_par_mag);
        push_nums(&mut s, f.v_perp.iter());
        push_nums(&mut s, f.stationary.iter());
        match &f.g_root {
            Some(g) => push_nums(&mut s, g.iter()),
            None => s.push_str(" - - -"),
        }
        push_nums(&mut s, f.theta_ref.iter());
        s.push('\n');
    }
    s
}

fn parse_frame(lines: &Lines, line: usize, fields: &[&str], joints: usize) -> Result<EstimatorFrame> {
    let expected = 1 + 1 + 3 + 5 + 3 + 3 * joints;
    if fields.len() != expected {
        return Err(lines.err(line, format!("expected {expected} fields, found {}", fields.len())));
    }
    let head = lines.nums(line, &fields[..10])?;
    let g_root = if fields[10..13].iter().all(|f| *f == "-") {
        None
    } else {
        Some(Vector3::from_column_slice(&lines.nums(line, &fields[10..13])?))
    };
    Ok(EstimatorFrame {
        timestamp: head[0],
        v_par_mag: head[1],
        v_perp: Vector3::new(head[2], head[3], head[4]),
        stationary: [head[5], head[6], head[7], head[8], head[9]],
        g_root,
        theta_ref: lines.nums(line, &fields[13..])?,
    })
}

pub fn frames_from_text(text: &str, path: &Path) -> Result<Vec<EstimatorFrame>> {
    let mut lines = Lines::new(text, path);
    let fields = lines.header("estimator-frames")?;
    let joints: usize = header_value(&lines, &fields, "joints")?;
    let mut out = Vec::new();
    while let Some((line, f)) = lines.next_record() {
        out.push(parse_frame(&lines, line, &f, joints)?);
    }
    Ok(out)
}

/// Streams estimator frames from a file without loading it whole.
pub struct FrameReader {
    path: std::path::PathBuf,
    reader: std::io::Lines<std::io::BufReader<std::fs::File>>,
    joints: usize,
    line: usize,
}

impl FrameReader {
    pub fn open(path: &Path) -> Result<Self> {
        use std::io::BufRead;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file).lines();
        let header = match reader.next() {
            Some(h) => h.map_err(|e| Error::io(path, e))?,
            None => String::new(),
        };
        let mut lines = Lines::new(&header, path);
        let fields = lines.header("estimator-frames")?;
        let joints = header_value(&lines, &fields, "joints")?;
        Ok(FrameReader {
            path: path.to_path_buf(),
            reader,
            joints,
            line: 1,
        })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }
}

impl Iterator for FrameReader {
    type Item = Result<EstimatorFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.reader.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line += 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let lines = Lines::new("", &self.path);
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            return Some(parse_frame(&lines, self.line, &fields, self.joints));
        }
    }
}

/// `t tx ty tz angles(3k) [c(5)]`
pub fn motion_to_text(motion: &MotionSequence) -> String {
    let joints = motion.angles.first().map_or(0, |a| a.len() / 3);
    let mut s = format!(
        "# motion v1 rate {:?} joints {joints} contacts {}\n",
        motion.frame_rate,
        if motion.contacts.is_some() { 1 } else { 0 }
    );
    for t in 0..motion.len() {
        let _ = write!(s, "{:?}", t as f64 / motion.frame_rate);
        push_nums(&mut s, motion.root[t].iter());
        push_nums(&mut s, motion.angles[t].iter());
        if let Some(c) = &motion.contacts {
            for b in c[t] {
                s.push_str(if b { " 1" } else { " 0" });
            }
        }
        s.push('\n');
    }
    s
}

pub fn motion_from_text(text: &str, path: &Path) -> Result<MotionSequence> {
    let mut lines = Lines::new(text, path);
    let fields = lines.header("motion")?;
    let frame_rate: f64 = header_value(&lines, &fields, "rate")?;
    let joints: usize = header_value(&lines, &fields, "joints")?;
    let has_contacts = header_value::<u8>(&lines, &fields, "contacts")? == 1;
    let width = 4 + 3 * joints + if has_contacts { 5 } else { 0 };
    let mut motion = MotionSequence {
        frame_rate,
        root: Vec::new(),
        angles: Vec::new(),
        contacts: has_contacts.then(Vec::new),
    };
    while let Some((line, f)) = lines.next_record() {
        if f.len() != width {
            return Err(lines.err(line, format!("expected {width} fields, found {}", f.len())));
        }
        let v = lines.nums(line, &f[..4 + 3 * joints])?;
        motion.root.push(Vector3::new(v[1], v[2], v[3]));
        motion.angles.push(v[4..].to_vec());
        if let Some(c) = motion.contacts.as_mut() {
            let mut flags = [false; 5];
            for (k, tok) in f[4 + 3 * joints..].iter().enumerate() {
                flags[k] = match *tok {
                    "0" => false,
                    "1" => true,
                    _ => return Err(lines.err(line, format!("contact flag must be 0 or 1, found {tok:?}"))),
                };
            }
            c.push(flags);
        }
    }
    Ok(motion)
}

/// `t sensor ax ay az wx wy wz r00 .. r22`, sensors interleaved per sample.
pub fn imu_log_to_text(log: &ImuLog) -> String {
    let mut s = format!("# imu-log v1 rate {:?} sensors {}\n", log.sample_rate, log.sensors.len());
    for t in 0..log.len() {
        for (i, sensor) in log.sensors.iter().enumerate() {
            let smp = &sensor[t];
            let _ = write!(s, "{:?} {i}", t as f64 / log.sample_rate);
            push_nums(&mut s, smp.acc.iter());
            push_nums(&mut s, smp.gyro.iter());
            push_matrix(&mut s, &smp.r_is);
            s.push('\n');
        }
    }
    s
}

pub fn imu_log_from_text(text: &str, path: &Path) -> Result<ImuLog> {
    let mut lines = Lines::new(text, path);
    let fields = lines.header("imu-log")?;
    let rate: f64 = header_value(&lines, &fields, "rate")?;
    let count: usize = header_value(&lines, &fields, "sensors")?;
    if count != SENSOR_COUNT {
        return Err(lines.err(1, format!("expected {SENSOR_COUNT} sensors, header says {count}")));
    }
    let mut sensors: Vec<Vec<ImuSample>> = vec![Vec::new(); count];
    while let Some((line, f)) = lines.next_record() {
        if f.len() != 17 {
            return Err(lines.err(line, format!("expected 17 fields, found {}", f.len())));
        }
        let idx: usize = f[1]
            .parse()
            .ok()
            .filter(|i| *i < count)
            .ok_or_else(|| lines.err(line, format!("bad sensor index {:?}", f[1])))?;
        let v = lines.nums(line, &f[2..])?;
        sensors[idx].push(ImuSample {
            acc: Vector3::new(v[0], v[1], v[2]),
            gyro: Vector3::new(v[3], v[4], v[5]),
            r_is: matrix_from(&v[6..15]),
        });
    }
    ImuLog::new(rate, sensors)
}

pub fn calibration_to_text(result: &CalibrationResult) -> String {
    let mut s = String::from("# calibration v1\n");
    s.push_str("r_im");
    push_matrix(&mut s, &result.r_im);
    s.push('\n');
    for i in 0..SENSOR_COUNT {
        let name = SENSOR_NAMES[i];
        let _ = write!(s, "r_sb {name}");
        push_matrix(&mut s, &result.r_sb[i]);
        let _ = write!(s, "\nr_heading {name}");
        push_matrix(&mut s, &result.r_heading[i]);
        let _ = write!(s, "\ndisplacement {name}");
        push_nums(&mut s, result.displacement[i].iter());
        let _ = writeln!(s, "\npose_return_deg {name} {:?}", result.pose_return_deg[i]);
    }
    s
}

/// Calibration file contents needed downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFile {
    pub r_im: Matrix3<f64>,
    pub r_sb: [Matrix3<f64>; SENSOR_COUNT],
    pub r_heading: [Matrix3<f64>; SENSOR_COUNT],
}

pub fn calibration_from_text(text: &str, path: &Path) -> Result<CalibrationFile> {
    let mut lines = Lines::new(text, path);
    lines.header("calibration")?;
    let mut r_im = None;
    let mut r_sb = [None; SENSOR_COUNT];
    let mut r_heading = [None; SENSOR_COUNT];
    while let Some((line, f)) = lines.next_record() {
        let sensor = |lines: &Lines| {
            f.get(1)
                .and_then(|n| SENSOR_NAMES.iter().position(|s| s == n))
                .ok_or_else(|| lines.err(line, format!("unknown sensor in {:?}", f.join(" "))))
        };
        match f[0] {
            "r_im" if f.len() == 10 => r_im = Some(matrix_from(&lines.nums(line, &f[1..])?)),
            "r_sb" if f.len() == 11 => r_sb[sensor(&lines)?] = Some(matrix_from(&lines.nums(line, &f[2..])?)),
            "r_heading" if f.len() == 11 => r_heading[sensor(&lines)?] = Some(matrix_from(&lines.nums(line, &f[2..])?)),
            "displacement" | "pose_return_deg" => {}
            other => return Err(lines.err(line, format!("unexpected record {other:?} with {} fields", f.len()))),
        }
    }
    let missing = |what: &str| lines.err(0, format!("calibration file lacks {what}"));
    let mut sb = [Matrix3::identity(); SENSOR_COUNT];
    let mut hd = [Matrix3::identity(); SENSOR_COUNT];
    for i in 0..SENSOR_COUNT {
        sb[i] = r_sb[i].ok_or_else(|| missing(&format!("r_sb for {}", SENSOR_NAMES[i])))?;
        hd[i] = r_heading[i].ok_or_else(|| missing(&format!("r_heading for {}", SENSOR_NAMES[i])))?;
    }
    Ok(CalibrationFile {
        r_im: r_im.ok_or_else(|| missing("r_im"))?,
        r_sb: sb,
        r_heading: hd,
    })
}

fn status_char(s: ContactStatus) -> char {
    match s {
        ContactStatus::Free => 'F',
        ContactStatus::Potential => 'P',
        ContactStatus::Contact => 'C',
    }
}

pub fn tracked_header(dof: usize, frame_rate: f64) -> String {
    format!("# tracked-states v1 dof {dof} rate {frame_rate:?}\n")
}

/// `t ok|drop status(5 chars) q(n) qdot(n) lambda(15) tau(n) e`
pub fn tracked_line(out: &FrameOutput) -> String {
    let mut s = format!("{:?} {}", out.timestamp, if out.dropped.is_some() { "drop" } else { "ok" });
    s.push(' ');
    s.extend(out.contacts.entries.iter().map(|e| status_char(e.status)));
    push_nums(&mut s, out.state.q.iter());
    push_nums(&mut s, out.state.qdot.iter());
    for e in &out.contacts.entries {
        push_nums(&mut s, e.lambda.iter());
    }
    push_nums(&mut s, out.tau.iter());
    let _ = writeln!(s, " {:?}", out.contact_residual);
    s
}

/// One parsed record of a tracked-states file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRecord {
    pub timestamp: f64,
    pub dropped: bool,
    pub status: [ContactStatus; 5],
    pub state: CharacterState,
    pub lambda: [Vector3<f64>; 5],
    pub tau: DVector<f64>,
    pub contact_residual: f64,
}

pub struct Tracked {
    pub frame_rate: f64,
    pub records: Vec<TrackedRecord>,
}

pub fn tracked_from_text(text: &str, path: &Path) -> Result<Tracked> {
    let mut lines = Lines::new(text, path);
    let fields = lines.header("tracked-states")?;
    let n: usize = header_value(&lines, &fields, "dof")?;
    let frame_rate: f64 = header_value(&lines, &fields, "rate")?;
    let width = 3 + 3 * n + 15 + 1;
    let mut records = Vec::new();
    while let Some((line, f)) = lines.next_record() {
        if f.len() != width {
            return Err(lines.err(line, format!("expected {width} fields, found {}", f.len())));
        }
        let dropped = match f[1] {
            "ok" => false,
            "drop" => true,
            o => return Err(lines.err(line, format!("expected ok or drop, found {o:?}"))),
        };
        let chars: Vec<char> = f[2].chars().collect();
        if chars.len() != 5 {
            return Err(lines.err(line, "contact status must have 5 letters"));
        }
        let mut status = [ContactStatus::Free; 5];
        for (k, c) in chars.iter().enumerate() {
            status[k] = match c {
                'F' => ContactStatus::Free,
                'P' => ContactStatus::Potential,
                'C' => ContactStatus::Contact,
                _ => return Err(lines.err(line, format!("bad contact status {c:?}"))),
            };
        }
        let t = lines.num(line, f[0])?;
        let v = lines.nums(line, &f[3..])?;
        let q = DVector::from_column_slice(&v[..n]);
        let qdot = DVector::from_column_slice(&v[n..2 * n]);
        let lambda = std::array::from_fn(|k| Vector3::from_column_slice(&v[2 * n + 3 * k..2 * n + 3 * k + 3]));
        records.push(TrackedRecord {
            timestamp: t,
            dropped,
            status,
            state: CharacterState { q, qdot },
            lambda,
            tau: DVector::from_column_slice(&v[2 * n + 15..3 * n + 15]),
            contact_residual: v[3 * n + 15],
        });
    }
    Ok(Tracked { frame_rate, records })
}

impl Tracked {
    pub fn to_motion(&self) -> MotionSequence {
        MotionSequence {
            frame_rate: self.frame_rate,
            root: self.records.iter().map(|r| r.state.root_position()).collect(),
            angles: self.records.iter().map(|r| r.state.angles().to_vec()).collect(),
            contacts: None,
        }
    }
}

/// Reads either a motion file or a tracked-states file as a motion.
pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    let text = read_file(path)?;
    if text.starts_with("# tracked-states") {
        Ok(tracked_from_text(&text, path)?.to_motion())
    } else {
        motion_from_text(&text, path)
    }
}

/// Checks that a motion matches a skeleton's joint count.
pub fn check_motion(model: &SkeletonModel, motion: &MotionSequence) -> Result<()> {
    motion.validate(model)
}
