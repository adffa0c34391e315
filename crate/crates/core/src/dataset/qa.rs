use crate::sim::ActionCategory;

/// The question asked about each action and the answer that justifies it.
pub const QA_TABLE: [(ActionCategory, &str, &str); 5] = [
    (
        ActionCategory::GoStraight,
        "Why is the car going straight?",
        "Because the road is clear.",
    ),
    (
        ActionCategory::TurnLeft,
        "Why is the car turning to the left?",
        "Because the road is bending to the left.",
    ),
    (
        ActionCategory::TurnLeftT,
        "Why is the car turning left at T-junction?",
        "Because there is no obstacle on the right side and turning left can be performed safely.",
    ),
    (
        ActionCategory::TurnRight,
        "Why is the car turning to the right?",
        "Because the road is bending to the right.",
    ),
    (
        ActionCategory::TurnRightT,
        "Why is the car turning right at T-junction?",
        "Because there is no obstacle on the left side and turning right can be performed safely.",
    ),
];

/// One question for every action, so only the frame can tell them apart.
pub const GENERIC_QUESTION: &str = "Why is the car doing this?";

pub fn question_for(category: ActionCategory) -> &'static str {
    QA_TABLE.iter().find(|e| e.0 == category).expect("every category has a row").1
}

pub fn answer_for(category: ActionCategory) -> &'static str {
    QA_TABLE.iter().find(|e| e.0 == category).expect("every category has a row").2
}

/// Category whose answer is exactly `answer`.
pub fn category_of_answer(answer: &str) -> Option<ActionCategory> {
    QA_TABLE.iter().find(|e| e.2 == answer).map(|e| e.0)
}

/// Display name used in report tables.
pub fn category_title(category: ActionCategory) -> &'static str {
    match category {
        ActionCategory::GoStraight => "Go straight",
        ActionCategory::TurnLeft => "Turn left",
        ActionCategory::TurnLeftT => "Turn left at T-junction",
        ActionCategory::TurnRight => "Turn right",
        ActionCategory::TurnRightT => "Turn right at T-junction",
    }
}
