/// JSON Schema of the `scenario` member of `POST /scenarios`.
pub const SCENARIO_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "$id": "lagrisk:scenario:1",
  "title": "Scenario",
  "type": "object",
  "additionalProperties": false,
  "properties": {
    "description": { "type": "string" },
    "overrides": {
      "type": "array",
      "items": {
        "type": "object",
        "additionalProperties": false,
        "required": ["source", "mode", "value"],
        "properties": {
          "source": { "type": "string", "minLength": 1 },
          "steps": {
            "type": "array",
            "items": { "type": "integer", "minimum": 0 },
            "minItems": 2,
            "maxItems": 2
          },
          "mode": { "enum": ["set", "mul"] },
          "value": { "type": "number" }
        }
      }
    }
  }
}
"#;
