use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "UNSW_NB15")]
    UnswNb15,
    #[serde(rename = "NSL_KDD")]
    NslKdd,
    #[serde(rename = "CICIDS2017")]
    Cicids2017,
    #[serde(rename = "BOT_IOT")]
    BotIot,
    #[serde(rename = "TRI_IDS")]
    TriIds,
}

impl DatasetName {
    pub const ALL: [DatasetName; 5] = [
        DatasetName::UnswNb15,
        DatasetName::NslKdd,
        DatasetName::Cicids2017,
        DatasetName::BotIot,
        DatasetName::TriIds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::UnswNb15 => "UNSW_NB15",
            DatasetName::NslKdd => "NSL_KDD",
            DatasetName::Cicids2017 => "CICIDS2017",
            DatasetName::BotIot => "BOT_IOT",
            DatasetName::TriIds => "TRI_IDS",
        }
    }

    pub fn schema(self) -> DatasetSchema {
        match self {
            DatasetName::NslKdd => nsl_kdd(),
            DatasetName::UnswNb15 => unsw_nb15(),
            DatasetName::Cicids2017 => cicids2017(),
            DatasetName::BotIot => bot_iot(),
            DatasetName::TriIds => tri_ids(),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace(['-', ' '], "_");
        DatasetName::ALL
            .into_iter()
            .find(|d| d.as_str().replace('_', "") == norm.replace('_', ""))
            .ok_or_else(|| Error::UnsupportedKind(format!("dataset {s}")))
    }
}

/// Static description of one dataset's CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: DatasetName,
    /// Feature count listed for the dataset in the benchmark overview table.
    pub raw_feature_count: usize,
    /// Column order used for files without a header row (label included).
    pub columns: Vec<String>,
    /// Trailing columns that headerless files may omit.
    pub optional_trailing: usize,
    pub categorical_columns: Vec<String>,
    pub label_column: String,
    /// Label values (case-insensitive, trimmed) that mean benign traffic.
    pub normal_label_values: Vec<String>,
    /// Identifier and leakage columns never used as features.
    pub drop_columns: Vec<String>,
}

impl DatasetSchema {
    pub fn is_categorical(&self, column: &str) -> bool {
        self.categorical_columns
            .iter()
            .any(|c| c.eq_ignore_ascii_case(column))
    }

    pub fn is_dropped(&self, column: &str) -> bool {
        self.drop_columns
            .iter()
            .any(|c| c.eq_ignore_ascii_case(column))
    }

    pub fn is_label(&self, column: &str) -> bool {
        self.label_column.eq_ignore_ascii_case(column)
    }

    /// Feature columns of the documented layout, in order.
    pub fn feature_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .map(String::as_str)
            .filter(|c| !self.is_label(c) && !self.is_dropped(c))
            .collect()
    }

    /// Normal → 0, anything else → 1.
    pub fn binarize(&self, raw: &str) -> u8 {
        let v = raw.trim().trim_end_matches('.');
        u8::from(
            !self
                .normal_label_values
                .iter()
                .any(|n| n.eq_ignore_ascii_case(v)),
        )
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub(crate) const NSL_KDD_FEATURES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

pub fn nsl_kdd() -> DatasetSchema {
    let mut columns = strings(&NSL_KDD_FEATURES);
    columns.push("label".into());
    columns.push("difficulty".into());
    DatasetSchema {
        name: DatasetName::NslKdd,
        raw_feature_count: 41,
        columns,
        optional_trailing: 1,
        categorical_columns: strings(&["protocol_type", "service", "flag"]),
        label_column: "label".into(),
        normal_label_values: strings(&["normal"]),
        drop_columns: strings(&["difficulty"]),
    }
}

/// Column order of the four raw (headerless) flow files.
const UNSW_COLUMNS: [&str; 49] = [
    "srcip",
    "sport",
    "dstip",
    "dsport",
    "proto",
    "state",
    "dur",
    "sbytes",
    "dbytes",
    "sttl",
    "dttl",
    "sloss",
    "dloss",
    "service",
    "Sload",
    "Dload",
    "Spkts",
    "Dpkts",
    "swin",
    "dwin",
    "stcpb",
    "dtcpb",
    "smeansz",
    "dmeansz",
    "trans_depth",
    "res_bdy_len",
    "Sjit",
    "Djit",
    "Stime",
    "Ltime",
    "Sintpkt",
    "Dintpkt",
    "tcprtt",
    "synack",
    "ackdat",
    "is_sm_ips_ports",
    "ct_state_ttl",
    "ct_flw_http_mthd",
    "is_ftp_login",
    "ct_ftp_cmd",
    "ct_srv_src",
    "ct_srv_dst",
    "ct_dst_ltm",
    "ct_src_ltm",
    "ct_src_dport_ltm",
    "ct_dst_sport_ltm",
    "ct_dst_src_ltm",
    "attack_cat",
    "Label",
];

pub fn unsw_nb15() -> DatasetSchema {
    DatasetSchema {
        name: DatasetName::UnswNb15,
        raw_feature_count: 49,
        columns: strings(&UNSW_COLUMNS),
        optional_trailing: 0,
        categorical_columns: strings(&["proto", "state", "service"]),
        label_column: "Label".into(),
        normal_label_values: strings(&["0"]),
        drop_columns: strings(&["id", "srcip", "dstip", "Stime", "Ltime", "attack_cat"]),
    }
}

pub(crate) const CICIDS_FEATURES: [&str; 78] = [
    "Destination Port",
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Max",
    "Bwd Packet Length Min",
    "Bwd Packet Length Mean",
    "Bwd Packet Length Std",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Total",
    "Fwd IAT Mean",
    "Fwd IAT Std",
    "Fwd IAT Max",
    "Fwd IAT Min",
    "Bwd IAT Total",
    "Bwd IAT Mean",
    "Bwd IAT Std",
    "Bwd IAT Max",
    "Bwd IAT Min",
    "Fwd PSH Flags",
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "Fwd Header Length",
    "Bwd Header Length",
    "Fwd Packets/s",
    "Bwd Packets/s",
    "Min Packet Length",
    "Max Packet Length",
    "Packet Length Mean",
    "Packet Length Std",
    "Packet Length Variance",
    "FIN Flag Count",
    "SYN Flag Count",
    "RST Flag Count",
    "PSH Flag Count",
    "ACK Flag Count",
    "URG Flag Count",
    "CWE Flag Count",
    "ECE Flag Count",
    "Down/Up Ratio",
    "Average Packet Size",
    "Avg Fwd Segment Size",
    "Avg Bwd Segment Size",
    "Fwd Header Length.1",
    "Fwd Avg Bytes/Bulk",
    "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate",
    "Bwd Avg Bytes/Bulk",
    "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate",
    "Subflow Fwd Packets",
    "Subflow Fwd Bytes",
    "Subflow Bwd Packets",
    "Subflow Bwd Bytes",
    "Init_Win_bytes_forward",
    "Init_Win_bytes_backward",
    "act_data_pkt_fwd",
    "min_seg_size_forward",
    "Active Mean",
    "Active Std",
    "Active Max",
    "Active Min",
    "Idle Mean",
    "Idle Std",
    "Idle Max",
    "Idle Min",
];

pub fn cicids2017() -> DatasetSchema {
    let mut columns = strings(&CICIDS_FEATURES);
    columns.push("Label".into());
    DatasetSchema {
        name: DatasetName::Cicids2017,
        raw_feature_count: 80,
        columns,
        optional_trailing: 0,
        categorical_columns: Vec::new(),
        label_column: "Label".into(),
        normal_label_values: strings(&["BENIGN"]),
        drop_columns: strings(&[
            "Flow ID",
            "Source IP",
            "Source Port",
            "Destination IP",
            "Protocol",
            "Timestamp",
        ]),
    }
}

const BOT_IOT_COLUMNS: [&str; 35] = [
    "pkSeqID",
    "stime",
    "flgs",
    "proto",
    "saddr",
    "sport",
    "daddr",
    "dport",
    "pkts",
    "bytes",
    "state",
    "ltime",
    "seq",
    "dur",
    "mean",
    "stddev",
    "smac",
    "dmac",
    "sum",
    "min",
    "max",
    "soui",
    "doui",
    "sco",
    "dco",
    "spkts",
    "dpkts",
    "sbytes",
    "dbytes",
    "rate",
    "srate",
    "drate",
    "attack",
    "category",
    "subcategory",
];

pub fn bot_iot() -> DatasetSchema {
    DatasetSchema {
        name: DatasetName::BotIot,
        raw_feature_count: 35,
        columns: strings(&BOT_IOT_COLUMNS),
        optional_trailing: 0,
        categorical_columns: strings(&["flgs", "proto", "state"]),
        label_column: "attack".into(),
        normal_label_values: strings(&["0"]),
        drop_columns: strings(&[
            "pkSeqID",
            "stime",
            "ltime",
            "saddr",
            "daddr",
            "smac",
            "dmac",
            "soui",
            "doui",
            "sco",
            "dco",
            "seq",
            "category",
            "subcategory",
            "flgs_number",
            "proto_number",
            "state_number",
        ]),
    }
}

/// Merged schema; its columns are produced by the Tri-IDS builder rather than read from disk.
pub fn tri_ids() -> DatasetSchema {
    DatasetSchema {
        name: DatasetName::TriIds,
        raw_feature_count: 120,
        columns: Vec::new(),
        optional_trailing: 0,
        categorical_columns: strings(&[
            "protocol",
            "nsl.service",
            "nsl.flag",
            "bot.flgs",
            "bot.state",
        ]),
        label_column: "label".into(),
        normal_label_values: strings(&["0"]),
        drop_columns: strings(&["source"]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_feature_counts() {
        let counts: Vec<_> = [
            DatasetName::UnswNb15,
            DatasetName::NslKdd,
            DatasetName::Cicids2017,
            DatasetName::TriIds,
        ]
        .iter()
        .map(|d| d.schema().raw_feature_count)
        .collect();
        assert_eq!(counts, [49, 41, 80, 120]);
    }

    #[test]
    fn nsl_layout() {
        let s = nsl_kdd();
        assert_eq!(s.columns.len(), 43);
        assert_eq!(s.feature_columns().len(), 41);
        assert!(!s.feature_columns().contains(&"label"));
    }

    #[test]
    fn cicids_layout() {
        assert_eq!(cicids2017().feature_columns().len(), 78);
    }

    #[test]
    fn binarize_labels() {
        let s = nsl_kdd();
        assert_eq!(s.binarize("normal"), 0);
        assert_eq!(s.binarize("neptune"), 1);
        assert_eq!(s.binarize(" Normal. "), 0);
        assert_eq!(cicids2017().binarize("BENIGN"), 0);
        assert_eq!(cicids2017().binarize("DDoS"), 1);
        assert_eq!(unsw_nb15().binarize("1"), 1);
    }

    #[test]
    fn names_parse() {
        assert_eq!(
            "nsl-kdd".parse::<DatasetName>().unwrap(),
            DatasetName::NslKdd
        );
        assert_eq!(
            "CICIDS2017".parse::<DatasetName>().unwrap(),
            DatasetName::Cicids2017
        );
        assert!("mnist".parse::<DatasetName>().is_err());
    }
}
